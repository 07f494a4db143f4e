//! Vega-Lite plot descriptions that read the emitted CSV
//! files.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::Result;
use crate::io::write_atomic;

const SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

/// One line per field against `x`, stacked vertically by panel.
pub fn line_panels(title: &str, data_file: &str, x: &str, panels: &[(&str, &[&str])]) -> Value {
    let rows: Vec<Value> = panels
        .iter()
        .map(|(label, fields)| {
            json!({
                "title": label,
                "width": 480,
                "height": 160,
                "transform": [{"fold": fields, "as": ["series", "value"]}],
                "mark": "line",
                "encoding": {
                    "x": {"field": x, "type": "quantitative"},
                    "y": {"field": "value", "type": "quantitative", "scale": {"zero": false}},
                    "color": {"field": "series", "type": "nominal"}
                }
            })
        })
        .collect();
    json!({
        "$schema": SCHEMA,
        "title": title,
        "data": {"url": data_file, "format": {"type": "csv"}},
        "vconcat": rows
    })
}

/// Standard panels for a scenario trace.
pub fn trace_plot(title: &str, data_file: &str) -> Value {
    line_panels(
        title,
        data_file,
        "t",
        &[
            ("Actuation", &["v_ptc", "current"]),
            ("Heating power", &["q_ptc"]),
            ("Temperature", &["t_m", "t_out", "t_avg"]),
            ("Temperature gradient", &["t_range"]),
        ],
    )
}

/// Grouped bars of energy components per category.
pub fn energy_bars(title: &str, data_file: &str, category: &str) -> Value {
    json!({
        "$schema": SCHEMA,
        "title": title,
        "data": {"url": data_file, "format": {"type": "csv"}},
        "transform": [{"fold": ["ptc_energy", "pulse_energy"], "as": ["component", "energy"]}],
        "mark": "bar",
        "encoding": {
            "x": {"field": category, "type": "nominal"},
            "y": {"field": "energy", "type": "quantitative", "stack": "zero", "title": "J"},
            "color": {"field": "component", "type": "nominal"}
        }
    })
}

pub fn write_plot(path: impl AsRef<Path>, spec: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(spec)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_plot_references_trace_columns() {
        let v = trace_plot("x", "trace.csv");
        assert_eq!(v["data"]["url"], "trace.csv");
        let s = v.to_string();
        for f in ["v_ptc", "q_ptc", "t_range", "t_out"] {
            assert!(s.contains(f));
        }
    }
}
