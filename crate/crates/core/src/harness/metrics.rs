//! Run metrics, their CSV files, and the derived comparison numbers.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::RewardVariant;
use crate::rl::UpdateReport;

pub const EPISODE_HEADER: [&str; 7] = ["episode", "prompt_id", "reward", "mean_T", "mean_p", "tokens", "terminal"];
pub const CHECKPOINT_HEADER: [&str; 2] = ["episode", "eval_avg_reward"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub prompt_id: String,
    pub reward: f64,
    pub mean_t: Option<f64>,
    pub mean_p: Option<f64>,
    pub tokens: usize,
    pub terminal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub episode: usize,
    pub eval_avg_reward: f64,
    /// Mean temperature over the evaluation episodes (not persisted).
    #[serde(skip)]
    pub eval_mean_t: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub label: String,
    pub variant: Option<RewardVariant>,
    pub episodes: Vec<EpisodeRow>,
    pub checkpoints: Vec<CheckpointRow>,
    pub train_prompt_ids: Vec<String>,
    pub eval_prompt_ids: Vec<String>,
    pub updates: Vec<UpdateReport>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunMetrics {
    /// Evaluation average at the last checkpoint.
    pub fn final_reward(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.eval_avg_reward)
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    pub fn write_episodes_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(EPISODE_HEADER)?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.prompt_id.clone(),
                e.reward.to_string(),
                opt(e.mean_t),
                opt(e.mean_p),
                e.tokens.to_string(),
                e.terminal.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_checkpoints_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(CHECKPOINT_HEADER)?;
        for c in &self.checkpoints {
            w.write_record([c.episode.to_string(), c.eval_avg_reward.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `metrics.csv` and `checkpoints.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_episodes_csv(&dir.join("metrics.csv"))?;
        self.write_checkpoints_csv(&dir.join("checkpoints.csv"))
    }

    /// Reads the per-episode rows of a metrics CSV.
    pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRow>> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().ne(EPISODE_HEADER) {
            return Err(Error::Input(format!("{}: unexpected header", path.display())));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Input(format!("bad {what} value '{s}'")))
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let opt_f = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s, what).map(Some)
                }
            };
            rows.push(EpisodeRow {
                episode: rec[0].parse().map_err(|_| Error::Input(format!("bad episode '{}'", &rec[0])))?,
                prompt_id: rec[1].to_string(),
                reward: parse_f(&rec[2], "reward")?,
                mean_t: opt_f(&rec[3], "mean_T")?,
                mean_p: opt_f(&rec[4], "mean_p")?,
                tokens: rec[5].parse().map_err(|_| Error::Input(format!("bad tokens '{}'", &rec[5])))?,
                terminal: rec[6].to_string(),
            });
        }
        Ok(rows)
    }
}

/// `100 * (new - base) / base`; NaN when `base` is zero.
pub fn percent_change(new: f64, base: f64) -> f64 {
    if base == 0.0 {
        f64::NAN
    } else {
        100.0 * (new - base) / base
    }
}

/// Signed two-decimal percentage, `n/a` for the undefined case.
pub fn format_percent(p: f64) -> String {
    if p.is_finite() {
        format!("{p:+.2}")
    } else {
        "n/a".to_string()
    }
}

/// Relative change between the first and last evaluation checkpoints, in
/// percent. NaN when the first checkpoint averages zero.
pub fn early_late_change(metrics: &RunMetrics) -> Result<f64> {
    match (metrics.checkpoints.first(), metrics.checkpoints.last()) {
        (Some(first), Some(last)) if metrics.checkpoints.len() >= 2 => {
            Ok(percent_change(last.eval_avg_reward, first.eval_avg_reward))
        }
        _ => Err(Error::Input("early-to-late change needs at least two checkpoints".into())),
    }
}

/// One row of the baseline comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variant: RewardVariant,
    pub ppo: f64,
    pub greedy: f64,
    pub static_: f64,
    pub delta_vs_greedy: f64,
    pub delta_vs_static: f64,
    pub early_late: f64,
}

/// Scores a trained policy against both baselines under one reward variant.
pub fn compare(policy: &RunMetrics, greedy: &RunMetrics, static_: &RunMetrics) -> Result<Comparison> {
    let variant = policy.variant.ok_or_else(|| Error::Comparison("policy run has no reward variant".into()))?;
    for (name, m) in [("greedy", greedy), ("static", static_)] {
        if m.variant != Some(variant) {
            return Err(Error::Comparison(format!(
                "{name} baseline used reward {:?}, policy used {variant}",
                m.variant.map(|v| v.name())
            )));
        }
    }
    let reward = |m: &RunMetrics, name: &str| {
        m.final_reward().ok_or_else(|| Error::Comparison(format!("{name} run has no evaluation")))
    };
    let ppo = reward(policy, "policy")?;
    let g = reward(greedy, "greedy")?;
    let s = reward(static_, "static")?;
    Ok(Comparison {
        variant,
        ppo,
        greedy: g,
        static_: s,
        delta_vs_greedy: percent_change(ppo, g),
        delta_vs_static: percent_change(ppo, s),
        early_late: early_late_change(policy).unwrap_or(f64::NAN),
    })
}

/// Fixed-width text table, one row per comparison.
pub struct ComparisonTable<'a>(pub &'a [Comparison]);

impl fmt::Display for ComparisonTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>7} {:>7} {:>7} {:>12} {:>12} {:>12}",
            "variant", "PPO", "Greedy", "Static", "dGreedy(%)", "dStatic(%)", "Early>Late"
        )?;
        for c in self.0 {
            writeln!(
                f,
                "{:<16} {:>7.3} {:>7.3} {:>7.3} {:>12} {:>12} {:>12}",
                c.variant.name(),
                c.ppo,
                c.greedy,
                c.static_,
                format_percent(c.delta_vs_greedy),
                format_percent(c.delta_vs_static),
                format_percent(c.early_late),
            )?;
        }
        Ok(())
    }
}

/// CSV rendering of a comparison table.
pub fn write_comparisons_csv(path: &Path, rows: &[Comparison]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "ppo", "greedy", "static", "delta_vs_greedy", "delta_vs_static", "early_late"])?;
    for c in rows {
        w.write_record([
            c.variant.name().to_string(),
            c.ppo.to_string(),
            c.greedy.to_string(),
            c.static_.to_string(),
            c.delta_vs_greedy.to_string(),
            c.delta_vs_static.to_string(),
            c.early_late.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
