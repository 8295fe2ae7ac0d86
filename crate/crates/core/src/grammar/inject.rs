use super::compile::{compile, Lineage, PlanColumn};
use super::spec::*;
use super::GrammarError;
use crate::data::{FieldKind, SchemaDef};

/// Adds a selection declaration and global-filter linkage to a validated
/// spec. The result keeps every key of the input unchanged.
///
/// The selection kind is fixed by the representation:
/// - tables select rows by the base entity's primary key;
/// - a point mark over two quantitative source fields brushes in 2D;
/// - an axis carrying bin labels brushes the underlying field in 1D;
/// - bar and rect marks click-select the nominal axis' categories;
/// - line marks brush their x field in 1D.
pub fn inject_interactivity(
    spec: &ViewSpec,
    schema: &SchemaDef,
    view_id: &str,
) -> Result<(ViewSpec, SelectionDecl), Vec<GrammarError>> {
    let plan = compile(spec, schema)?;
    let decl = |kind, lineages: &[&Lineage]| SelectionDecl {
        view: view_id.to_owned(),
        kind,
        entity: lineages[0].entity.clone(),
        fields: lineages.iter().map(|l| l.field.clone()).collect(),
    };
    let base_key = || {
        let entity = schema.entity(&plan.base_entity).expect("compiled plan has a known base entity");
        SelectionDecl {
            view: view_id.to_owned(),
            kind: SelectionKind::Point,
            entity: entity.name.clone(),
            fields: vec![entity.key.clone()],
        }
    };

    let selection = match &spec.representation {
        Representation::Table { .. } => base_key(),
        Representation::Mark(m) => {
            let column = |enc| -> Option<&PlanColumn> {
                let field = &m.channel(enc)?.field;
                plan.output.iter().find(|c| &c.name == field)
            };
            let axes: Vec<&PlanColumn> = [Encoding::X, Encoding::Y]
                .into_iter()
                .filter_map(column)
                .collect();

            let scatter = match (m.mark, column(Encoding::X), column(Encoding::Y)) {
                (Mark::Point, Some(x), Some(y)) => match (source_with_kind(schema, x, QUANTITATIVE), source_with_kind(schema, y, QUANTITATIVE)) {
                    (Some(lx), Some(ly)) if lx.entity == ly.entity && lx.field != ly.field => {
                        Some(decl(SelectionKind::Interval2d, &[lx, ly]))
                    }
                    _ => None,
                },
                _ => None,
            };
            let binned = || {
                axes.iter()
                    .find_map(|c| c.binned.as_ref())
                    .map(|l| decl(SelectionKind::Interval1d, &[l]))
            };
            let categorical = || match m.mark {
                Mark::Bar | Mark::Rect => axes
                    .iter()
                    .filter(|c| c.kind == ValueKind::Nominal)
                    .find_map(|c| source_with_kind(schema, c, NOMINAL))
                    .map(|l| decl(SelectionKind::Point, &[l])),
                _ => None,
            };
            let line = || match m.mark {
                Mark::Line => column(Encoding::X)
                    .and_then(|c| source_with_kind(schema, c, QUANTITATIVE))
                    .map(|l| decl(SelectionKind::Interval1d, &[l])),
                _ => None,
            };
            let fallback = || {
                m.mapping
                    .iter()
                    .filter_map(|map| plan.output.iter().find(|c| c.name == map.field))
                    .find_map(|c| {
                        source_with_kind(schema, c, QUANTITATIVE)
                            .map(|l| decl(SelectionKind::Interval1d, &[l]))
                            .or_else(|| source_with_kind(schema, c, NOMINAL).map(|l| decl(SelectionKind::Point, &[l])))
                    })
            };
            scatter
                .or_else(binned)
                .or_else(categorical)
                .or_else(line)
                .or_else(fallback)
                .unwrap_or_else(base_key)
        }
    };

    let mut injected = spec.clone();
    injected.interactivity = Some(Interactivity {
        selection: selection.clone(),
        global_filters: true,
    });
    Ok((injected, selection))
}

const QUANTITATIVE: &[FieldKind] = &[FieldKind::Quantitative];
const NOMINAL: &[FieldKind] = &[FieldKind::Categorical, FieldKind::Identifier];

fn source_with_kind<'c>(schema: &SchemaDef, c: &'c PlanColumn, kinds: &[FieldKind]) -> Option<&'c Lineage> {
    c.lineage
        .as_ref()
        .filter(|l| schema.field(&l.entity, &l.field).is_some_and(|f| kinds.contains(&f.kind)))
}
