use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::CliError;
use crate::output::{Summary, TABLE};

pub const FIGURES: [&str; 3] = ["btc_r_vs_alpha", "osm_vs_rl", "casper_voting"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(dir: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(dir.join(TABLE))?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("result table has no column '{name}'")))
    }

    fn filter(&mut self, select: &[(String, String)]) -> Result<(), CliError> {
        for (key, value) in select {
            let c = self.col(key)?;
            self.rows.retain(|r| r[c] == *value);
        }
        Ok(())
    }
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn expect_kind(summary: &Summary, kind: &str, figure: &str) -> Result<(), CliError> {
    if summary.kind != kind {
        return Err(CliError::Usage(format!("figure {figure} needs {kind} results, got {}", summary.kind)));
    }
    Ok(())
}

fn sort_by_num(rows: &mut [Vec<String>], c: usize) {
    rows.sort_by(|a, b| num(&a[c]).total_cmp(&num(&b[c])));
}

fn unique_key(rows: &[Vec<String>], c: usize, figure: &str) -> Result<(), CliError> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = rows.iter().find(|r| !seen.insert(r[c].clone())) {
        return Err(CliError::Usage(format!(
            "figure {figure}: several rows share {}; narrow them with --select",
            dup[c]
        )));
    }
    Ok(())
}

/// Writes plot-ready CSV for `figure` from the result directory `dir`.
pub fn emit(dir: &Path, figure: &str, select: &[(String, String)], out: &mut dyn Write) -> Result<(), CliError> {
    if !FIGURES.contains(&figure) {
        return Err(CliError::Usage(format!("unknown figure '{figure}' (known: {})", FIGURES.join(", "))));
    }
    let summary = Summary::read(dir)?;
    let mut t = Table::read(dir)?;
    t.filter(select)?;
    let mut w = csv::Writer::from_writer(out);
    match figure {
        "btc_r_vs_alpha" => {
            expect_kind(&summary, "solve-osm", figure)?;
            let cols = ["alpha", "honest", "sm1", "rho_star", "learned"].map(|c| t.col(c));
            let cols = cols.into_iter().collect::<Result<Vec<_>, _>>()?;
            sort_by_num(&mut t.rows, cols[0]);
            unique_key(&t.rows, cols[0], figure)?;
            w.write_record(["alpha", "honest", "sm1", "osm", "learned"])?;
            for r in &t.rows {
                w.write_record(cols.iter().map(|&c| &r[c]))?;
            }
        }
        "osm_vs_rl" => {
            expect_kind(&summary, "multiagent-tournament", figure)?;
            let (a, mu, agent, ex) = (t.col("alpha")?, t.col("matchup")?, t.col("agent")?, t.col("excess_mean")?);
            t.rows.retain(|r| r[agent] == "0");
            let mut matchups: Vec<String> = Vec::new();
            let mut alphas: Vec<String> = Vec::new();
            let mut cells: HashMap<(String, String), String> = HashMap::new();
            for r in &t.rows {
                if !matchups.contains(&r[mu]) {
                    matchups.push(r[mu].clone());
                }
                if !alphas.contains(&r[a]) {
                    alphas.push(r[a].clone());
                }
                if cells.insert((r[a].clone(), r[mu].clone()), r[ex].clone()).is_some() {
                    return Err(CliError::Usage(format!(
                        "figure {figure}: several rows for alpha {} and {}; narrow them with --select",
                        r[a], r[mu]
                    )));
                }
            }
            alphas.sort_by(|x, y| num(x).total_cmp(&num(y)));
            w.write_record(std::iter::once("alpha".to_string()).chain(matchups.iter().map(|m| format!("excess_rel_reward_{m}"))))?;
            for al in &alphas {
                let row = matchups.iter().map(|m| cells.get(&(al.clone(), m.clone())).cloned().unwrap_or_default());
                w.write_record(std::iter::once(al.clone()).chain(row))?;
            }
        }
        "casper_voting" => {
            expect_kind(&summary, "casper", figure)?;
            let cols = ["beta", "honest_vote_reward", "attack_vote_reward", "gain_pct"].map(|c| t.col(c));
            let cols = cols.into_iter().collect::<Result<Vec<_>, _>>()?;
            sort_by_num(&mut t.rows, cols[0]);
            unique_key(&t.rows, cols[0], figure)?;
            w.write_record(["beta", "honest_vote_reward", "attack_vote_reward", "gain_pct"])?;
            for r in &t.rows {
                w.write_record(cols.iter().map(|&c| &r[c]))?;
            }
        }
        _ => unreachable!("checked against FIGURES"),
    }
    w.flush()?;
    Ok(())
}
