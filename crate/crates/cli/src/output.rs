use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::Format;

/// Top-level output of every command.
#[derive(Debug, Serialize)]
pub struct Document {
    pub command: &'static str,
    pub spec: Value,
    pub results: Vec<Value>,
    pub summary: Value,
}

pub fn render(doc: &Document, format: Format, out: &mut dyn Write) -> anyhow::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, doc)?;
            writeln!(out)?;
        }
        Format::Csv => write_csv(doc, out)?,
        Format::Table => write_table(doc, out)?,
    }
    Ok(())
}

/// Leaves of `value` keyed by dotted path. Arrays stay whole, as JSON text.
fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn write_csv(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    let rows: Vec<Vec<(String, String)>> = doc
        .results
        .iter()
        .map(|r| {
            let mut cells = Vec::new();
            flatten("", r, &mut cells);
            cells
        })
        .collect();
    let mut header: Vec<String> = Vec::new();
    for (k, _) in rows.iter().flatten() {
        if !header.contains(k) {
            header.push(k.clone());
        }
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(&header)?;
    for row in &rows {
        let lookup: Map<String, Value> = row.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        writer.write_record(header.iter().map(|h| lookup.get(h).and_then(Value::as_str).unwrap_or("")))?;
    }
    writer.flush()?;
    Ok(())
}

fn num(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(Value::as_f64)
}

fn fixed3(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

fn sci(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |x| format!("{x:+.3e}"))
}

fn flag(x: Option<bool>) -> &'static str {
    match x {
        Some(true) => "yes",
        Some(false) => "NO",
        None => "n/a",
    }
}

fn spec_line(spec: &Value) -> String {
    format!(
        "m_p = {}, sd_p = {}, m_q = {}, sd_q = {}",
        spec["mean_p"], spec["sigma_p"], spec["mean_q"], spec["sigma_q"]
    )
}

fn write_table(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    match doc.command {
        "bound" => table_bound(doc, out),
        "compare" => table_compare(doc, out),
        "verify" => table_verify(doc, out),
        "sequence" => table_sequence(doc, out),
        other => unreachable!("unknown command {other}"),
    }
}

fn table_bound(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    let r = &doc.results[0];
    writeln!(out, "{}", spec_line(&doc.spec))?;
    writeln!(out, "hellinger_lb      {}", fixed3(num(r, "hellinger_lb")))?;
    writeln!(out, "bhattacharyya_ub  {}", fixed3(num(r, "bhattacharyya_ub")))?;
    writeln!(out, "comparison_lb     {}", fixed3(num(r, "comparison_lb")))?;
    writeln!(out, "beta_min          {}", fixed3(num(r, "beta_min")))?;
    writeln!(out, "beta_max          {}", fixed3(num(r, "beta_max")))?;
    match r.get("attainer").filter(|a| !a.is_null()) {
        Some(att) => {
            writeln!(out, "attainer")?;
            for key in ["r", "s", "u1", "u2"] {
                writeln!(out, "  {key:<3} {}", att[key])?;
            }
        }
        None => writeln!(out, "note: {}", doc.summary["note"].as_str().unwrap_or(""))?,
    }
    Ok(())
}

fn table_compare(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(
        out,
        "{:>9} {:>9} {:>9} {:>9} | {:>7} {:>7} {:>8} {:>11} | {:>8} {:>8}",
        "m_p", "sd_p", "m_q", "sd_q", "tight", "l", "gaussian", "exponential", "dominate", "sandwich"
    )?;
    for r in &doc.results {
        let s = &r["spec"];
        writeln!(
            out,
            "{:>9.4} {:>9.4} {:>9.4} {:>9.4} | {:>7} {:>7} {:>8} {:>11} | {:>8} {:>8}",
            num(s, "mean_p").unwrap_or(f64::NAN),
            num(s, "sigma_p").unwrap_or(f64::NAN),
            num(s, "mean_q").unwrap_or(f64::NAN),
            num(s, "sigma_q").unwrap_or(f64::NAN),
            fixed3(num(r, "tight_bound")),
            fixed3(num(r, "comparison_bound")),
            fixed3(num(r, "gaussian_h2")),
            fixed3(num(r, "exponential_h2")),
            flag(r["closed_forms_dominate"].as_bool()),
            flag(r["sandwich_consistent"].as_bool()),
        )?;
    }
    Ok(())
}

fn table_verify(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(out, "{}", spec_line(&doc.spec))?;
    for o in &doc.results {
        let index = o["index"].as_u64().unwrap_or_default();
        let kind = o["kind"].as_str().unwrap_or("?");
        match o.get("record").filter(|r| !r.is_null()) {
            Some(r) => writeln!(
                out,
                "{index:>6} {kind:<9} h2 {:.6} gap {} residual {:.1e} off_top2 {:.1e}{}{}",
                num(r, "achieved_h2").unwrap_or(f64::NAN),
                sci(num(r, "gap")),
                num(r, "moment_residual").unwrap_or(f64::NAN),
                num(r, "off_top2_mass").unwrap_or(f64::NAN),
                if r["feasible"].as_bool() == Some(true) { "" } else { " infeasible" },
                o.get("error").and_then(Value::as_str).map(|e| format!(" ({e})")).unwrap_or_default(),
            )?,
            None => writeln!(
                out,
                "{index:>6} {kind:<9} error: {}",
                o.get("error").and_then(Value::as_str).unwrap_or("unknown")
            )?,
        }
    }
    let s = &doc.summary;
    writeln!(out, "records: {} ({} feasible, {} errors)", s["n_records"], s["n_feasible"], s["n_errors"])?;
    writeln!(out, "min gap: {}", sci(num(s, "min_gap")))?;
    writeln!(out, "violations: {}", s["violations"])?;
    writeln!(out, "optimizer converged: {}", flag(s["optimizer_converged"].as_bool()))?;
    writeln!(out, "optimizer gap: {}", sci(num(s, "optimizer_gap")))?;
    writeln!(out, "two-point concentrated: {}", flag(s["two_point_concentrated"].as_bool()))?;
    if s["touched_box"].as_bool() == Some(true) {
        writeln!(out, "warning: some pair touched the support box; treat those runs as inconclusive")?;
    }
    Ok(())
}

fn table_sequence(doc: &Document, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(out, "sd_p = {}, sd_q = {}, xi = {}", doc.spec["sigma_p"], doc.spec["sigma_q"], doc.summary["xi"])?;
    writeln!(out, "{:>10} {:>14} {:>14} {:>10}", "j", "H2", "h2(xi/j,1/j)", "|diff|")?;
    for r in &doc.results {
        writeln!(
            out,
            "{:>10} {:>14.6e} {:>14.6e} {:>10.1e}",
            r["j"].as_u64().unwrap_or_default(),
            num(r, "h2").unwrap_or(f64::NAN),
            num(r, "binary_h2").unwrap_or(f64::NAN),
            num(r, "abs_diff").unwrap_or(f64::NAN),
        )?;
    }
    Ok(())
}
