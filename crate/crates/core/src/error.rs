use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("schema config syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl SchemaError {
    pub(crate) fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            SchemaError::Invalid { path, .. } => Some(path),
            SchemaError::Syntax { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("no table source for entity '{0}'")]
    MissingSource(String),
    #[error("table source for unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("{entity}: malformed CSV: {message}")]
    Csv { entity: String, message: String },
    #[error("{entity}: missing column '{column}'")]
    MissingColumn { entity: String, column: String },
    #[error("{entity}: unexpected column '{column}'")]
    UnexpectedColumn { entity: String, column: String },
    #[error("{entity} row {row}, column '{column}': '{value}' is not numeric")]
    NotNumeric {
        entity: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{entity} row {row}: missing primary key '{column}'")]
    MissingKey {
        entity: String,
        row: usize,
        column: String,
    },
    #[error("{entity} row {row}: duplicate primary key '{key}'")]
    DuplicateKey {
        entity: String,
        row: usize,
        key: String,
    },
    #[error("{entity} row {row}, field '{field}': dangling foreign key '{value}' (no such {parent})")]
    DanglingForeignKey {
        entity: String,
        row: usize,
        field: String,
        value: String,
        parent: String,
    },
}
