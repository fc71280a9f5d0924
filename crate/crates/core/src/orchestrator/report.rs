//! Mean and standard deviation of per-seed best MSE.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::db::{PdeFilter, Provenance, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub pde_id: String,
    pub provenance: Provenance,
    /// Seeds with at least one completed run.
    pub seeds: usize,
    pub runs: usize,
    pub mean_mse: f64,
    /// Population standard deviation over seeds.
    pub std_mse: f64,
}

/// One row per (PDE, provenance): the best completed MSE of every master
/// seed, aggregated across seeds. Rows are ordered by PDE id, then
/// provenance name.
pub fn report(records: &[RunRecord], filter: &PdeFilter) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&str, &str), (Provenance, usize, BTreeMap<u64, f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| filter.matches(&r.pde_id)) {
        let g = groups
            .entry((r.pde_id.as_str(), r.provenance.as_str()))
            .or_insert((r.provenance, 0, BTreeMap::new()));
        g.1 += 1;
        if let Some(m) = r.completed_mse() {
            let best = g.2.entry(r.seed).or_insert(m);
            *best = best.min(m);
        }
    }
    groups
        .into_iter()
        .filter(|(_, (_, _, best))| !best.is_empty())
        .map(|((pde, _), (provenance, runs, best))| {
            let n = best.len() as f64;
            let mean = best.values().sum::<f64>() / n;
            let var = best.values().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
            ReportRow {
                pde_id: pde.to_string(),
                provenance,
                seeds: best.len(),
                runs,
                mean_mse: mean,
                std_mse: var.sqrt(),
            }
        })
        .collect()
}

/// Scientific notation with `digits` decimals and an unpadded exponent.
pub fn sci(v: f64, digits: usize) -> String {
    format!("{v:.digits$e}")
}

pub fn report_table(rows: &[ReportRow]) -> String {
    let header = ["pde", "method", "seeds", "runs", "mse (std)"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.pde_id.clone(),
                r.provenance.to_string(),
                r.seeds.to_string(),
                r.runs.to_string(),
                format!("{} ({})", sci(r.mean_mse, 2), sci(r.std_mse, 1)),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: [&str; 5]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(&format!("{c:<w$}"));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for row in &body {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
    }
    out
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv write");
    }
    if rows.is_empty() {
        w.write_record(["pde_id", "provenance", "seeds", "runs", "mean_mse", "std_mse"])
            .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::tests::record;

    fn rec(pde: &str, prov: Provenance, seed: u64, mse: Option<f64>) -> RunRecord {
        let mut r = record(pde, mse, seed);
        r.provenance = prov;
        r.seed = seed;
        r
    }

    #[test]
    fn single_run_has_zero_std() {
        let rows = report(&[rec("poisson1d", Provenance::Random, 1, Some(1e-3))], &PdeFilter::Any);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_mse, 1e-3);
        assert_eq!(rows[0].std_mse, 0.0);
    }

    #[test]
    fn best_per_seed_then_moments() {
        let mses = [3e-4, 1e-3, 2e-4, 5e-5, 7e-4, 1.5e-3, 9e-5, 4e-4, 6e-4, 2.5e-4];
        let mut records = Vec::new();
        for (s, &m) in mses.iter().enumerate() {
            records.push(rec("heat1d", Provenance::Mtrs, s as u64, Some(m)));
            records.push(rec("heat1d", Provenance::Mtrs, s as u64, Some(m * 10.0)));
            records.push(rec("heat1d", Provenance::Mtrs, s as u64, None));
        }
        let rows = report(&records, &PdeFilter::Only("heat1d".into()));
        assert_eq!(rows.len(), 1);
        let mean = 5.09e-4;
        let var = mses.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / 10.0;
        assert!((rows[0].mean_mse - mean).abs() < 1e-12);
        assert!((rows[0].std_mse - var.sqrt()).abs() < 1e-12);
        assert_eq!(rows[0].seeds, 10);
        assert_eq!(rows[0].runs, 30);
    }

    #[test]
    fn separate_rows_per_provenance_and_pde() {
        let records = vec![
            rec("poisson1d", Provenance::Random, 0, Some(1e-2)),
            rec("poisson1d", Provenance::Mtrs, 0, Some(1e-4)),
            rec("heat1d", Provenance::Mtrs, 0, Some(1e-3)),
        ];
        let rows = report(&records, &PdeFilter::Any);
        let keys: Vec<(&str, Provenance)> = rows.iter().map(|r| (r.pde_id.as_str(), r.provenance)).collect();
        assert_eq!(
            keys,
            vec![
                ("heat1d", Provenance::Mtrs),
                ("poisson1d", Provenance::Mtrs),
                ("poisson1d", Provenance::Random)
            ]
        );
    }

    #[test]
    fn empty_match_is_an_empty_table() {
        let records = vec![rec("poisson1d", Provenance::Random, 0, Some(1e-2))];
        let rows = report(&records, &PdeFilter::Only("wave1d".into()));
        assert!(rows.is_empty());
        assert_eq!(report_table(&rows).lines().count(), 1);
        assert_eq!(report_csv(&rows).lines().count(), 1);
    }

    #[test]
    fn table_formatting() {
        assert_eq!(sci(1.234e-4, 2), "1.23e-4");
        assert_eq!(sci(5.6e-5, 1), "5.6e-5");
        let rows = vec![ReportRow {
            pde_id: "poisson1d".into(),
            provenance: Provenance::Tpe,
            seeds: 5,
            runs: 105,
            mean_mse: 1.234e-4,
            std_mse: 5.61e-5,
        }];
        let t = report_table(&rows);
        assert!(t.lines().nth(1).unwrap().ends_with("1.23e-4 (5.6e-5)"), "{t}");
        let csv = report_csv(&rows);
        assert_eq!(
            csv.lines().next().unwrap(),
            "pde_id,provenance,seeds,runs,mean_mse,std_mse"
        );
        assert!(csv.lines().nth(1).unwrap().starts_with("poisson1d,tpe,5,105,"));
    }
}
