use serde::{Deserialize, Serialize};

/// Table rows as `(interpolation, harmonization)`.
pub const METHODS: [(&str, &str); 8] = [
    ("weighted-linear", "linear"),
    ("weighted-linear", "mlp"),
    ("nearest", "linear"),
    ("nearest", "mlp"),
    ("cubic-rbf", "linear"),
    ("cubic-rbf", "mlp"),
    ("pointnet", "mlp"),
    ("none", "histogram-matching"),
];

pub const DATASETS: [&str; 2] = ["no-shift", "with-shift"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub interpolation: String,
    pub harmonization: String,
    pub dataset: String,
    pub mae: f64,
    /// Tile points that could not be evaluated.
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    /// Fitted baseline parameters, tiles, fallback counts and settings.
    pub details: serde_json::Value,
}

impl BenchmarkReport {
    pub fn get(&self, interpolation: &str, harmonization: &str, dataset: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.interpolation == interpolation
                    && r.harmonization == harmonization
                    && r.dataset == dataset
            })
            .map(|r| r.mae)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("interpolation,harmonization,dataset,mae,skipped\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{}\n",
                r.interpolation, r.harmonization, r.dataset, r.mae, r.skipped
            ));
        }
        out
    }

    /// Aligned text table: one row per method, one column per dataset.
    pub fn to_table(&self) -> String {
        let datasets: Vec<&str> = DATASETS
            .iter()
            .copied()
            .filter(|d| self.rows.iter().any(|r| r.dataset == *d))
            .collect();
        let mut out = format!("{:<16} {:<19}", "Interpolation", "Harmonization");
        for d in &datasets {
            out.push_str(&format!(" {d:>10}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(36 + 11 * datasets.len()));
        out.push('\n');
        for (interp, harm) in METHODS {
            out.push_str(&format!("{interp:<16} {harm:<19}"));
            for d in &datasets {
                match self.get(interp, harm, d) {
                    Some(v) => out.push_str(&format!(" {v:>10.4}")),
                    None => out.push_str(&format!(" {:>10}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> BenchmarkReport {
        let rows = DATASETS
            .iter()
            .flat_map(|d| {
                METHODS
                    .iter()
                    .enumerate()
                    .map(move |(k, (i, h))| ReportRow {
                        interpolation: i.to_string(),
                        harmonization: h.to_string(),
                        dataset: d.to_string(),
                        mae: k as f64 / 100.0,
                        skipped: 0,
                    })
            })
            .collect();
        BenchmarkReport {
            rows,
            details: serde_json::Value::Null,
        }
    }

    #[test]
    fn csv_has_sixteen_cells() {
        let csv = full().to_csv();
        assert_eq!(csv.lines().count(), 17);
        assert!(csv.contains("pointnet,mlp,with-shift,0.060000,0"));
    }

    #[test]
    fn table_layout() {
        let t = full().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 10);
        assert!(lines[0].contains("no-shift") && lines[0].contains("with-shift"));
        assert!(lines[9].starts_with("none"));
        assert!(lines.iter().skip(2).all(|l| l.len() == lines[2].len()));
    }
}
