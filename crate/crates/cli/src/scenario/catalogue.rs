use boundary_core::catalogue::{catalogue, CatalogueParams, CatalogueRow};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::output::{num, to_json, Artifacts};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CatalogueConfig(pub CatalogueParams);

impl CatalogueConfig {
    pub fn run(&self) -> CliResult<Artifacts> {
        let rows = catalogue(&self.0)?;
        Ok(Artifacts {
            summary: to_json(&rows)?,
            files: Vec::new(),
        })
    }
}

fn live(r: &CatalogueRow) -> String {
    let Some(v) = &r.verdict else {
        return "-".to_string();
    };
    let mut s = num(v.boundary_value);
    if v.vacuous {
        s.push_str(" vacuous");
    }
    if v.satisfied {
        s.push_str(" ok");
    } else {
        s.push_str(&format!(" VIOLATED cost {}", num(v.violation_cost)));
    }
    s
}

/// Fixed-width text table of catalogue rows.
pub fn catalogue_table(rows: &[CatalogueRow]) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.spec_id.to_string(),
                serde_json::to_value(r.domain)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                r.boundary_condition.clone(),
                r.violation_cost.clone(),
                r.design_rule.clone(),
                live(r),
            ]
        })
        .collect();
    let header = [
        "id",
        "domain",
        "boundary",
        "violation cost",
        "design rule",
        "live",
    ];
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |c: &[&str]| {
        let mut s = String::new();
        for (i, (w, x)) in width.iter().zip(c).enumerate() {
            if i + 1 == c.len() {
                s.push_str(x);
            } else {
                s.push_str(&format!("{x:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    for c in &cells {
        out.push_str(&line(&c.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}
