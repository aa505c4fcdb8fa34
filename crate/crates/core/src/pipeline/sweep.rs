use std::path::Path;

use super::config::SweepConfig;
use super::eval::evaluate;
use super::train::{distill, TeacherCache};
use crate::data::read_corpus;
use crate::error::Result;
use crate::losses::WindowSpec;
use crate::metrics::{write_report_csv, write_report_json, ReportRow};
use crate::model::Checkpoint;

/// Trains one student per (mode, window) against the configured teacher and
/// writes `tradeoff.csv` / `tradeoff.json` with one row per student, sorted by delay.
pub fn reproduce_tradeoff(config: &SweepConfig, out: &Path) -> Result<Vec<ReportRow>> {
    std::fs::create_dir_all(out)?;
    let corpus = read_corpus(&config.corpus)?;
    let teacher = Checkpoint::load(&config.teacher)?;
    let reference = config.reference.as_deref().map(Checkpoint::load).transpose()?;
    let utts = corpus.split(config.split);
    let mut rows = Vec::new();
    for &mode in &config.modes {
        for &n in &config.windows {
            let recipe = WindowSpec::signed(n, mode).to_string();
            let mut student = config.student.clone();
            student.loss.recipe = recipe.clone();
            let cache = TeacherCache::Disk(out.join("teacher-cache"));
            let (ckpt, log) = distill(&teacher, &student, &corpus, cache)?;
            let stem = recipe.replace(':', "_");
            ckpt.save(&out.join(format!("{stem}.ckpt")))?;
            log.save(&out.join(format!("{stem}.log.json")))?;
            rows.push(evaluate(&ckpt, utts, reference.as_ref())?.row);
        }
    }
    rows.sort_by(|a, b| a.delay_frames.unwrap_or(f64::INFINITY).total_cmp(&b.delay_frames.unwrap_or(f64::INFINITY)));
    write_report_csv(&out.join("tradeoff.csv"), &rows)?;
    write_report_json(&out.join("tradeoff.json"), &rows)?;
    Ok(rows)
}
