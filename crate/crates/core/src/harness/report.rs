//! Accuracy report assembly: results.csv and summary.md.

use std::fs;
use std::path::Path;

use crate::corruptions::CorruptionKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub clean: f64,
    pub cells: Vec<Cell>,
}

impl RunReport {
    pub fn kinds(&self) -> Vec<CorruptionKind> {
        let mut kinds = Vec::new();
        for c in &self.cells {
            if !kinds.contains(&c.kind) {
                kinds.push(c.kind);
            }
        }
        kinds
    }

    pub fn kind_mean(&self, kind: CorruptionKind) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.accuracy)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Mean over kinds of the per-kind severity mean.
    pub fn mean_corruption_accuracy(&self) -> f64 {
        let kinds = self.kinds();
        kinds.iter().map(|&k| self.kind_mean(k)).sum::<f64>() / kinds.len() as f64
    }

    pub fn mean_over(&self, kinds: &[CorruptionKind]) -> f64 {
        kinds.iter().map(|&k| self.kind_mean(k)).sum::<f64>() / kinds.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("corruption,severity,accuracy\n");
        out.push_str(&format!("clean,0,{:.17}\n", self.clean));
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.17}\n",
                c.kind.name(),
                c.severity,
                c.accuracy
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "corruption,severity,accuracy" {
            return Err(Error::Format(format!("bad CSV header '{header}'")));
        }
        let mut clean = None;
        let mut cells = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("bad CSV row '{line}'")));
            }
            let severity: u8 = parts[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad severity in '{line}'")))?;
            let accuracy: f64 = parts[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad accuracy in '{line}'")))?;
            if parts[0] == "clean" {
                clean = Some(accuracy);
            } else {
                cells.push(Cell {
                    kind: CorruptionKind::parse(parts[0])?,
                    severity,
                    accuracy,
                });
            }
        }
        Ok(Self {
            clean: clean.ok_or_else(|| Error::Format("CSV missing clean row".into()))?,
            cells,
        })
    }

    pub fn to_summary_md(&self) -> String {
        let mut out = String::from("# Evaluation summary\n\n");
        out.push_str("| Corruption | Mean accuracy |\n|---|---|\n");
        out.push_str(&format!("| Clean | {:.4} |\n", self.clean));
        for kind in self.kinds() {
            out.push_str(&format!(
                "| {} | {:.4} |\n",
                title_case(kind.name()),
                self.kind_mean(kind)
            ));
        }
        out.push_str(&format!(
            "| Mean Corruption Acc | {:.4} |\n",
            self.mean_corruption_accuracy()
        ));
        out
    }

    /// Write results.csv and summary.md into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.to_csv())?;
        fs::write(dir.join("summary.md"), self.to_summary_md())?;
        Ok(())
    }
}

fn title_case(name: &str) -> String {
    name.split('_')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
