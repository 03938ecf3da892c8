use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RunHeader, GENERATIONS_FILE, HEADER_FILE};
use crate::error::{Error, Result};
use crate::model::{GenerationRecord, Individual, PopulationLabel, PpaMetric, SCHEMA_VERSION};

/// Everything `render_report` needs, read back from a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub header: RunHeader,
    pub records: Vec<GenerationRecord>,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let header_path = dir.join(HEADER_FILE);
    let gen_path = dir.join(GENERATIONS_FILE);
    if !header_path.exists() || !gen_path.exists() {
        return Err(Error::config(format!("{} does not contain a run", dir.display())));
    }
    let header_text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: RunHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::config(format!("{}: {e}", header_path.display())))?;

    let text = fs::read_to_string(&gen_path).map_err(|e| Error::io(&gen_path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| Error::Record { generation: i, message };
        let record: GenerationRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(corrupt(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                record.schema_version
            )));
        }
        if record.generation_index as usize != i {
            return Err(corrupt(format!("line holds generation {}", record.generation_index)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Record {
            generation: 0,
            message: format!("{} is empty", gen_path.display()),
        });
    }
    Ok(RunData { header, records })
}

/// Inclusive generation ranges used to group the power-area scatter:
/// 0-4, 5-11 and 12-20 for 20 generations, scaled for other lengths.
pub fn generation_bands(last_generation: u32) -> Vec<(u32, u32)> {
    let g = last_generation;
    let cut = |num: u32| (num * g + 10) / 20;
    let (e1, e2) = (cut(4), cut(11));
    [(0, e1), (e1 + 1, e2), (e2 + 1, g)]
        .into_iter()
        .filter(|(a, b)| a <= b)
        .collect()
}

/// `(reference - generated) / reference * 100`.
pub fn improvement_percent(reference: f64, generated: f64) -> f64 {
    (reference - generated) / reference * 100.0
}

fn find(records: &[GenerationRecord], id: crate::model::IndividualId) -> Option<&Individual> {
    records
        .iter()
        .flat_map(|r| r.population.iter().chain(&r.offspring))
        .find(|i| i.id == id)
}

fn metric_label(m: PpaMetric) -> &'static str {
    match m {
        PpaMetric::Power => "Power",
        PpaMetric::Area => "Area",
        PpaMetric::ClockPeriod => "Period",
    }
}

pub fn render_report(run: &RunData) -> Result<String> {
    let records = &run.records;
    let last = records.last().expect("load_run rejects empty runs");
    let best = find(records, last.best_so_far).ok_or_else(|| Error::Record {
        generation: last.generation_index as usize,
        message: format!("best individual {} is not in any record", last.best_so_far),
    })?;
    let spec = &run.header.problem;
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "Problem: {}", spec.name).ok();
    writeln!(
        w,
        "Generations: {} (N={}, lambda={}, provider {}, evaluator {})",
        last.generation_index,
        run.header.evolution.population_size,
        run.header.evolution.offspring_count,
        run.header.provider,
        run.header.evaluator
    )
    .ok();
    let correct = best.fitness_or_min().is_finite();
    writeln!(
        w,
        "Status: {}",
        if correct {
            "functionally correct design found"
        } else {
            crate::evolution::NO_CORRECT_DESIGN
        }
    )
    .ok();
    writeln!(
        w,
        "Best individual: {} (generation {}, fitness {})",
        best.id,
        best.generation_born,
        best.fitness_or_min()
    )
    .ok();

    writeln!(w, "\n## Thought\n{}", best.thought.trim()).ok();
    writeln!(w, "\n## Code\n```verilog\n{}\n```", best.code.trim_end()).ok();

    writeln!(w, "\n## PPA vs reference").ok();
    let reportable = best.outcome().is_some_and(|o| {
        o.synth_succeeded && (!run.header.post_synth_check || o.post_synth_functional == Some(true))
    });
    match best.ppa() {
        Some(ppa) if reportable => {
            writeln!(w, "{:<8} {:>14} {:>14} {:>10}", "metric", "generated", "reference", "improv.").ok();
            for m in PpaMetric::ALL {
                let (g, r) = (ppa.metric(m), spec.reference_ppa.metric(m));
                writeln!(w, "{:<8} {:>14.4e} {:>14.4e} {:>9.1}%", metric_label(m), g, r, improvement_percent(r, g)).ok();
            }
            for m in PpaMetric::ALL {
                let (g, r) = (ppa.metric(m), spec.reference_ppa.metric(m));
                writeln!(w, "{} improv. {:.1}%", metric_label(m), improvement_percent(r, g)).ok();
            }
        }
        _ => {
            writeln!(w, "not reported: the best design has no verified post-synthesis PPA").ok();
        }
    }

    writeln!(w, "\n## Pass rate by generation").ok();
    writeln!(w, "{:>4} {:>9} {:>8} {:>6} {:>14}", "gen", "pass", "success", "fail", "best fitness").ok();
    for r in records {
        writeln!(
            w,
            "{:>4} {:>8.1}% {:>8} {:>6} {:>14}",
            r.generation_index,
            r.pass_rate() * 100.0,
            r.success_count,
            r.fail_count,
            format!("{:.6}", r.best_fitness.value())
        )
        .ok();
    }

    writeln!(w, "\n## Strategy statistics").ok();
    writeln!(w, "{:<8} {:<9} {:>6} {:>8}", "pop", "strategy", "pulls", "Q").ok();
    for (label, bandit) in [
        (PopulationLabel::Fail, &last.bandits.fail),
        (PopulationLabel::Success, &last.bandits.success),
    ] {
        for (strategy, stats) in &bandit.stats {
            writeln!(w, "{:<8} {:<9} {:>6} {:>8.4}", label, strategy, stats.pull_count, stats.q_value).ok();
        }
    }

    writeln!(w, "\n## Power-area scatter").ok();
    writeln!(w, "{:<8} {:>7} {:>4} {:>14} {:>14}", "band", "id", "gen", "power", "area").ok();
    let evaluated = records[0]
        .population
        .iter()
        .chain(records[1..].iter().flat_map(|r| r.offspring.iter()));
    let points: Vec<&Individual> = evaluated
        .filter(|i| i.outcome().is_some_and(|o| o.sim_passed) && i.ppa().is_some())
        .collect();
    for (lo, hi) in generation_bands(last.generation_index) {
        let band = format!("{lo}-{hi}");
        for p in points.iter().filter(|p| (lo..=hi).contains(&p.generation_born)) {
            let ppa = p.ppa().expect("filtered on ppa");
            writeln!(w, "{:<8} {:>7} {:>4} {:>14.4e} {:>14.4e}", band, p.id.to_string(), p.generation_born, ppa.power, ppa.area).ok();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        assert_eq!(generation_bands(20), vec![(0, 4), (5, 11), (12, 20)]);
        assert_eq!(generation_bands(10), vec![(0, 2), (3, 6), (7, 10)]);
        assert_eq!(generation_bands(1), vec![(0, 0), (1, 1)]);
        assert_eq!(generation_bands(0), vec![(0, 0)]);
    }

    #[test]
    fn half_power_is_fifty_percent() {
        assert_eq!(format!("{:.1}", improvement_percent(4.0, 2.0)), "50.0");
        assert!(improvement_percent(1.0, 1.5) < 0.0);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_run(dir.path()).unwrap_err().to_string().contains("does not contain a run"));
    }
}
