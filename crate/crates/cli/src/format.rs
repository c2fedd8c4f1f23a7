use orthofem::analysis::{ConvergenceTable, TableRow};

use crate::config::Format;
use crate::fixtures::DiffRow;

pub const CSV_HEADER: &str = "dim,e_p1,rate_p1,e_p2,rate_p2,e_V,rate_V,e_comb,rate_comb";

/// `%.4E` as in C: four decimals, signed exponent of at least two digits.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.4E}");
    let (mant, exp) = s.split_once('E').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}E{sign}{:02}", exp.abs())
}

pub fn rate(x: f64) -> String {
    format!("{x:.2}")
}

fn cell(v: Option<f64>, f: fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn columns(r: &TableRow) -> [(Option<f64>, Option<f64>); 4] {
    [(r.e_p1, r.rate_p1), (r.e_p2, r.rate_p2), (r.e_v, r.rate_v), (r.e_comb, r.rate_comb)]
}

const TITLES: [&str; 4] = ["e_p1", "e_p2", "e_V", "e_comb"];

pub fn emit_table(table: &ConvergenceTable, format: Format) -> String {
    match format {
        Format::Csv => emit_csv(table),
        Format::Markdown => emit_markdown(table),
    }
}

fn emit_csv(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    if !table.meta.is_empty() {
        out.push_str(&format!("# {}\n", table.meta));
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let mut line = r.dim.to_string();
        for (e, k) in columns(r) {
            line.push(',');
            line.push_str(&cell(e, sci));
            line.push(',');
            line.push_str(&cell(k, rate));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Pipe table with the columns some row fills; missing rates print as `---`.
fn emit_markdown(table: &ConvergenceTable) -> String {
    let used: Vec<usize> = (0..4).filter(|&c| table.rows.iter().any(|r| columns(r)[c].0.is_some())).collect();
    let mut header = vec!["dim".to_string()];
    for &c in &used {
        header.push(TITLES[c].to_string());
        header.push("rate".to_string());
    }
    let body: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![r.dim.to_string()];
            for &c in &used {
                let (e, k) = columns(r)[c];
                line.push(e.map_or("---".into(), sci));
                line.push(k.map_or("---".into(), rate));
            }
            line
        })
        .collect();
    let mut out = String::new();
    if !table.meta.is_empty() {
        out.push_str(&format!("<!-- {} -->\n", table.meta));
    }
    out.push_str(&aligned(&header, &body));
    out
}

fn aligned(header: &[String], body: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len(), 3]).max().unwrap_or(3))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header);
    let rule: Vec<String> = widths.iter().map(|&w| format!("{}:", "-".repeat(w - 1))).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for r in body {
        out.push_str(&line(r));
    }
    out
}

/// Relative error deviations as signed percentages, rate differences as plain numbers.
pub fn emit_diff(rows: &[DiffRow], format: Format) -> String {
    let pct = |x: f64| format!("{:+.2}%", 100.0 * x);
    let signed = |x: f64| format!("{x:+.2}");
    let header: Vec<String> = CSV_HEADER.split(',').map(String::from).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.dim.to_string()];
            for c in 0..4 {
                line.push(r.errors[c].map(pct).unwrap_or_default());
                line.push(r.rates[c].map(signed).unwrap_or_default());
            }
            line
        })
        .collect();
    match format {
        Format::Csv => {
            let mut out = header.join(",") + "\n";
            for r in body {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        Format::Markdown => aligned(&header, &body),
    }
}
