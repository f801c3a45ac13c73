//! Scores the random agent and both oracles on the frozen test sets, prints
//! the results table, and compares random against the social oracle with
//! Welch's t-test over ten 100-seed chunks of the test set.

use talkitout::eval::{evaluate, format_table, welch_t_test, MeanStd, TableRow, TestSet};
use talkitout::{AgentKind, HistoryMode, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let variants = [Variant::Original, Variant::NoLiar];
    let kinds = [AgentKind::Random, AgentKind::OraclePrivileged, AgentKind::OracleSocial];
    let mut rows = Vec::new();
    let mut per_chunk = Vec::new();
    for kind in kinds {
        let mut cells = Vec::new();
        let mut chunks = Vec::new();
        for v in variants {
            let report = evaluate(kind.as_str(), || kind.build(), &TestSet::frozen(v), HistoryMode::Current)?;
            // ten 100-episode chunks give a spread for the table and the test
            let rates: Vec<f64> = report
                .outcomes
                .chunks(100)
                .map(|c| c.iter().filter(|o| o.success).count() as f64 / c.len() as f64)
                .collect();
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64;
            cells.push(Some(MeanStd { mean, std: var.sqrt() }));
            println!(
                "{:<18} {:<9} success {:.3}  mean reward {:.3}  timeouts {:.3}",
                kind.as_str(),
                v.as_str(),
                report.success_rate,
                report.mean_reward,
                report.timeout_rate
            );
            if v == Variant::Original {
                chunks = rates;
            }
        }
        rows.push(TableRow { condition: kind.as_str().to_string(), cells });
        per_chunk.push(chunks);
    }
    println!("\n{}", format_table(&variants, &rows));
    let w = welch_t_test(&per_chunk[0], &per_chunk[2])?;
    println!("random vs oracle-social (original): t={:.3} dof={:.2} p={:.3e}", w.t, w.dof, w.p);
    Ok(())
}
