//! Reference convergence tables stored as CSV in the emitter's own format.

use orthofem::analysis::{ConvergenceTable, TableRow};

use crate::format::CSV_HEADER;
use crate::{CliError, Result};

pub const TABLES: [(&str, &str); 6] = [
    ("table1", include_str!("../fixtures/table1.csv")),
    ("table2", include_str!("../fixtures/table2.csv")),
    ("table3", include_str!("../fixtures/table3.csv")),
    ("table4", include_str!("../fixtures/table4.csv")),
    ("table5", include_str!("../fixtures/table5.csv")),
    ("table6", include_str!("../fixtures/table6.csv")),
];

pub fn fixture_text(name: &str) -> Result<&'static str> {
    TABLES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Fixture(format!("no stored table '{name}' (table1 … table6)")))
}

pub fn paper_table(name: &str) -> Result<ConvergenceTable> {
    parse_csv(fixture_text(name)?)
}

/// Reads a table written by `emit_table(…, Format::Csv)`; rates are taken as stored.
pub fn parse_csv(text: &str) -> Result<ConvergenceTable> {
    let mut lines = text.lines().peekable();
    let mut table = ConvergenceTable::new("");
    if let Some(meta) = lines.peek().and_then(|l| l.strip_prefix("# ")) {
        table.meta = meta.to_string();
        lines.next();
    }
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(CliError::Fixture(format!("expected header '{CSV_HEADER}', got {other:?}"))),
    }
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(CliError::Fixture(format!("row {}: {} cells, expected 9", i + 1, cells.len())));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| CliError::Fixture(format!("row {}: bad number '{s}'", i + 1)))
            }
        };
        let dim = cells[0].parse().map_err(|_| CliError::Fixture(format!("row {}: bad dim '{}'", i + 1, cells[0])))?;
        table.rows.push(TableRow {
            dim,
            e_p1: num(cells[1])?,
            rate_p1: num(cells[2])?,
            e_p2: num(cells[3])?,
            rate_p2: num(cells[4])?,
            e_v: num(cells[5])?,
            rate_v: num(cells[6])?,
            e_comb: num(cells[7])?,
            rate_comb: num(cells[8])?,
        });
    }
    Ok(table)
}

/// Per-cell comparison at one shared dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffRow {
    pub dim: usize,
    /// `(ours − reference) / reference` for e_p1, e_p2, e_V, e_comb
    pub errors: [Option<f64>; 4],
    /// `ours − reference` for the matching rates
    pub rates: [Option<f64>; 4],
}

/// Rows of `ours` whose dimension also appears in `reference`.
pub fn diff_tables(ours: &ConvergenceTable, reference: &ConvergenceTable) -> Vec<DiffRow> {
    let pair = |a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64| match (a, b) {
        (Some(a), Some(b)) => Some(f(a, b)),
        _ => None,
    };
    ours.rows
        .iter()
        .filter_map(|r| {
            let p = reference.row_at_dim(r.dim)?;
            let (e, q) = (r.errors(), p.errors());
            let (k, s) = (r.rates(), p.rates());
            Some(DiffRow {
                dim: r.dim,
                errors: std::array::from_fn(|c| pair(e[c], q[c], |a, b| (a - b) / b)),
                rates: std::array::from_fn(|c| pair(k[c], s[c], |a, b| a - b)),
            })
        })
        .collect()
}
