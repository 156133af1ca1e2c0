//! Result files for a finished grid run.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{GridResult, Metric};
use crate::error::Result;

pub const SR_WINS_FILE: &str = "sr_wins.csv";
pub const CEQ_WINS_FILE: &str = "ceq_wins.csv";
pub const METRICS_FILE: &str = "per_cell_metrics.csv";
pub const SUMMARY_FILE: &str = "summary.md";

/// `race,method,K,d,c,wins` rows: per cell, then totals per `K`, per
/// `(d, c)` and overall. `*` marks a dimension summed over.
pub fn write_wins<W: Write>(res: &GridResult, metric: Metric, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["race", "method", "K", "d", "c", "wins"])?;
    let star = || "*".to_string();
    for race in &res.races {
        for &m in &race.methods {
            let mut row = |k: String, d: String, c: String, wins: usize| {
                wtr.write_record([race.name.clone(), m.to_string(), k, d, c, wins.to_string()])
            };
            for cell in &res.cells {
                let wins = res.wins(&race.name, metric, m, |x| x == cell);
                row(cell.k.to_string(), cell.d.to_string(), cell.c.to_string(), wins)?;
            }
            for &k in &res.grid.ks {
                row(k.to_string(), star(), star(), res.wins(&race.name, metric, m, |x| x.k == k))?;
            }
            for &d in &res.grid.ds {
                for &c in &res.grid.cs {
                    let wins = res.wins(&race.name, metric, m, |x| x.d == d && x.c == c);
                    row(star(), d.to_string(), c.to_string(), wins)?;
                }
            }
            row(star(), star(), star(), res.wins(&race.name, metric, m, |_| true))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row per cell and method; returns in percent per month.
pub fn write_metrics<W: Write>(res: &GridResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["K", "d", "c", "method", "sr", "ceq_pct", "mean_return_pct", "volatility_pct"])?;
    for r in &res.records {
        let n = r.monthly_returns.len() as f64;
        let mean = r.monthly_returns.iter().sum::<f64>() / n;
        let var = r.monthly_returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        wtr.write_record([
            r.k.to_string(),
            r.d.to_string(),
            r.c.to_string(),
            r.method.clone(),
            format!("{:.4}", r.sr),
            format!("{:.4}", 100.0 * r.ceq),
            format!("{:.4}", 100.0 * mean),
            format!("{:.4}", 100.0 * var.sqrt()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Markdown overview: total wins per race and metric.
pub fn summary(res: &GridResult) -> String {
    let mut s = String::new();
    let g = &res.grid;
    let _ = writeln!(s, "# Horse race summary\n");
    let _ = writeln!(
        s,
        "{} assets, {} evaluated months ({} to {}), {} cells, seed {}, delta {}.\n",
        res.n_assets,
        res.n_evaluated,
        res.first_date,
        res.last_date,
        res.cells.len(),
        g.seed,
        g.delta
    );
    let _ = writeln!(s, "K = {:?}, d = {:?}, c = {:?}\n", g.ks, g.ds, g.cs);
    for race in &res.races {
        let _ = writeln!(s, "## Race `{}`\n", race.name);
        let _ = writeln!(s, "| method | SR wins | CEQ wins |");
        let _ = writeln!(s, "|---|---:|---:|");
        for &m in &race.methods {
            let _ = writeln!(
                s,
                "| {m} | {} | {} |",
                res.wins(&race.name, Metric::Sr, m, |_| true),
                res.wins(&race.name, Metric::Ceq, m, |_| true)
            );
        }
        let _ = writeln!(s);
    }
    s
}

/// Writes all four result files into `dir`, creating it if needed.
pub fn write_reports(res: &GridResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_wins(res, Metric::Sr, File::create(dir.join(SR_WINS_FILE))?)?;
    write_wins(res, Metric::Ceq, File::create(dir.join(CEQ_WINS_FILE))?)?;
    write_metrics(res, File::create(dir.join(METRICS_FILE))?)?;
    std::fs::write(dir.join(SUMMARY_FILE), summary(res))?;
    Ok(())
}
