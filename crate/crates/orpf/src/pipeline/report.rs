//! Result files: interdependence matrix, radar coordinates, combined
//! evaluation, distribution statistics, tap histogram and run summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{box_stats, column_stats, normalize_radar, tap_histogram, BoxStats, ColumnStats, TapBin};
use super::{CombinedResult, InterdependenceResult, PipelineConfig, COMBINED};
use crate::error::{Error, Result};
use crate::netmodel::FORMAT_VERSION;
use crate::objectives::ObjectiveSpec;

pub const QUARTILE_METHOD: &str = "linear interpolation at position p*(n-1) of the sorted samples";

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// `interdependence.csv`: one row per family, then `mu` and `sigma`.
pub fn write_interdependence_csv<W: Write>(out: W, res: &InterdependenceResult) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["format_version".to_string(), "family".into()];
    header.extend(res.objectives.iter().map(|o| o.name()));
    header.extend(["cases".into(), "failures".into(), "flagged".into()]);
    w.write_record(&header)?;
    let v = FORMAT_VERSION.to_string();
    for r in &res.rows {
        let mut rec = vec![v.clone(), r.family.clone()];
        rec.extend(r.values.iter().map(|&x| fmt(x)));
        rec.extend([r.cases_used.to_string(), r.failures.to_string(), r.flagged.to_string()]);
        w.write_record(&rec)?;
    }
    for (name, pick) in [("mu", (|s: &ColumnStats| s.mu) as fn(&ColumnStats) -> f64), ("sigma", |s| s.sigma)] {
        let mut rec = vec![v.clone(), name.to_string()];
        rec.extend(res.stats.iter().map(|s| fmt(pick(s))));
        rec.extend([String::new(), String::new(), String::new()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A matrix read back from an interdependence CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTable {
    pub objectives: Vec<ObjectiveSpec>,
    /// Family rows, `mu` and `sigma` excluded.
    pub rows: Vec<(String, Vec<f64>)>,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
}

impl MatrixTable {
    /// Stored `mu` row, or the column means of the family rows.
    pub fn means(&self) -> Result<Vec<f64>> {
        if let Some(mu) = &self.mu {
            return Ok(mu.clone());
        }
        self.computed_stats().map(|s| s.iter().map(|c| c.mu).collect())
    }

    pub fn computed_stats(&self) -> Result<Vec<ColumnStats>> {
        (0..self.objectives.len())
            .map(|o| column_stats(&self.rows.iter().map(|r| r.1[o]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.1.clone()).collect()
    }
}

/// Reads a matrix CSV with a `family` column and one column per objective;
/// `format_version`, `cases`, `failures` and `flagged` are accepted and
/// ignored, any other column is an error.
pub fn read_matrix_csv(text: &str) -> Result<MatrixTable> {
    let parse_err = |msg: String| Error::Parse {
        what: "matrix csv".into(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let mut family_col = None;
    let mut obj_cols = Vec::new();
    for (i, h) in header.iter().enumerate() {
        match h {
            "family" => family_col = Some(i),
            "format_version" | "cases" | "failures" | "flagged" => {}
            name => obj_cols.push((i, ObjectiveSpec::parse(name)?)),
        }
    }
    let family_col = family_col.ok_or_else(|| parse_err("missing 'family' column".into()))?;
    if obj_cols.is_empty() {
        return Err(parse_err("no objective columns".into()));
    }
    let mut table = MatrixTable {
        objectives: obj_cols.iter().map(|c| c.1).collect(),
        rows: vec![],
        mu: None,
        sigma: None,
    };
    let version_col = header.iter().position(|h| h == "format_version");
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if let Some(i) = version_col {
            let v = rec.get(i).unwrap_or("");
            if v != FORMAT_VERSION.to_string() {
                return Err(parse_err(format!("row {}: unsupported format_version '{v}'", line + 1)));
            }
        }
        let family = rec.get(family_col).unwrap_or("").to_string();
        let values = obj_cols
            .iter()
            .map(|&(i, o)| {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("row {} ({family}), {o}: '{s}' is not a finite number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        match family.as_str() {
            "mu" => table.mu = Some(values),
            "sigma" => table.sigma = Some(values),
            "" => return Err(parse_err(format!("row {}: empty family", line + 1))),
            _ => table.rows.push((family, values)),
        }
    }
    if table.rows.is_empty() && table.mu.is_none() {
        return Err(parse_err("no data rows".into()));
    }
    Ok(table)
}

/// `radar.csv`: each family row min-max normalized per column.
pub fn write_radar_csv<W: Write>(out: W, objectives: &[ObjectiveSpec], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let norm = normalize_radar(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>())?;
    let mut w = csv_writer(out);
    let mut header = vec!["format_version".to_string(), "family".into()];
    header.extend(objectives.iter().map(|o| o.name()));
    w.write_record(&header)?;
    for ((family, _), vals) in rows.iter().zip(norm) {
        let mut rec = vec![FORMAT_VERSION.to_string(), family.clone()];
        rec.extend(vals.into_iter().map(fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `combined_eval.csv`: combined performance and, when checked, the
/// envelope of the optimized families.
pub fn write_combined_csv<W: Write>(out: W, res: &CombinedResult) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["format_version".to_string(), "row".into()];
    header.extend(res.objectives.iter().map(|o| o.name()));
    w.write_record(&header)?;
    let v = FORMAT_VERSION.to_string();
    let mut emit = |name: &str, vals: Vec<String>| -> Result<()> {
        let mut rec = vec![v.clone(), name.to_string()];
        rec.extend(vals);
        w.write_record(&rec)?;
        Ok(())
    };
    emit("alpha", res.alphas.iter().map(|&a| fmt(a)).collect())?;
    emit(COMBINED, res.row.values.iter().map(|&a| fmt(a)).collect())?;
    if !res.envelope.is_empty() {
        emit("envelope_min", res.envelope.iter().map(|e| fmt(e.min)).collect())?;
        emit("envelope_max", res.envelope.iter().map(|e| fmt(e.max)).collect())?;
        emit("within", res.envelope.iter().map(|e| e.within.to_string()).collect())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStatsFile {
    pub format_version: u32,
    pub quartile_method: String,
    pub family: String,
    pub series: BTreeMap<String, BoxStats>,
}

/// Distributions over all successful operating points of the combined run.
pub fn combined_box_stats(res: &CombinedResult) -> Result<BoxStatsFile> {
    let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for p in res.family.ok_records().filter_map(|r| r.point.as_ref()) {
        samples.entry("gen_p_over_pmax").or_default().extend(&p.p_rel);
        samples.entry("gen_q_over_pmax").or_default().extend(&p.q_rel);
        samples.entry("gen_bus_voltage").or_default().extend(&p.u_gen);
        samples.entry("trafo_lv_voltage").or_default().extend(&p.u_lv);
        samples.entry("trafo_hv_p_over_sn").or_default().extend(&p.p_hv_rel);
    }
    let mut series = BTreeMap::new();
    for (name, v) in samples {
        if !v.is_empty() {
            series.insert(name.to_string(), box_stats(&v)?);
        }
    }
    Ok(BoxStatsFile {
        format_version: FORMAT_VERSION,
        quartile_method: QUARTILE_METHOD.into(),
        family: res.family.family.clone(),
        series,
    })
}

pub fn combined_taps(res: &CombinedResult, min_count: usize) -> Vec<TapBin> {
    let taps: Vec<i32> = res
        .family
        .ok_records()
        .filter_map(|r| r.point.as_ref())
        .flat_map(|p| p.taps.iter().copied())
        .collect();
    tap_histogram(&taps, min_count)
}

pub fn write_taps_csv<W: Write>(out: W, bins: &[TapBin]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["format_version", "tap", "count", "percent"])?;
    for b in bins {
        w.write_record([FORMAT_VERSION.to_string(), b.tap.to_string(), b.count.to_string(), fmt(b.percent)])?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of the configuration's canonical JSON.
pub fn config_hash(cfg: &PipelineConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    Ok(Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub cases_used: usize,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSummary {
    pub alphas: Vec<f64>,
    pub f_alpha: f64,
    pub f_alpha_direct: f64,
    pub envelope_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub network: String,
    pub seed: u64,
    pub case_ids: Vec<usize>,
    pub objectives: Vec<ObjectiveSpec>,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub tol_stat: f64,
    pub tol_feas: f64,
    pub tol_comp: f64,
    pub quartile_method: String,
    pub families: Vec<FamilySummary>,
    pub diagonal_violations: Vec<String>,
    pub combined: Option<CombinedSummary>,
}

pub fn summary(
    network: &str,
    cfg: &PipelineConfig,
    inter: &InterdependenceResult,
    combined: Option<&CombinedResult>,
) -> Result<Summary> {
    let mut families: Vec<FamilySummary> = inter
        .rows
        .iter()
        .chain(combined.map(|c| &c.row))
        .map(|r| FamilySummary {
            family: r.family.clone(),
            cases_used: r.cases_used,
            failures: r.failures,
            flagged: r.flagged,
        })
        .collect();
    families.dedup_by(|a, b| a.family == b.family);
    Ok(Summary {
        format_version: FORMAT_VERSION,
        network: network.to_string(),
        seed: cfg.seed,
        case_ids: inter.case_ids.clone(),
        objectives: inter.objectives.clone(),
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        tol_stat: cfg.optimize.solver.tol_stat,
        tol_feas: cfg.optimize.solver.tol_feas,
        tol_comp: cfg.optimize.solver.tol_comp,
        quartile_method: QUARTILE_METHOD.into(),
        families,
        diagonal_violations: inter.diagonal_violations.clone(),
        combined: combined.map(|c| CombinedSummary {
            alphas: c.alphas.clone(),
            f_alpha: c.f_alpha,
            f_alpha_direct: c.f_alpha_direct,
            envelope_violations: c
                .envelope_violations()
                .iter()
                .map(|e| format!("{}: {} outside [{}, {}]", e.objective, e.value, e.min, e.max))
                .collect(),
        }),
    })
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

fn json_bytes<T: Serialize>(buf: &mut Vec<u8>, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *buf, v)?;
    buf.push(b'\n');
    Ok(())
}

/// Writes every report file derivable from the given results into `dir`.
/// Returns the names written.
pub fn write_report(
    dir: &Path,
    network: &str,
    cfg: &PipelineConfig,
    inter: &InterdependenceResult,
    combined: Option<&CombinedResult>,
) -> Result<Vec<&'static str>> {
    fs::create_dir_all(dir)?;
    let mut written = vec!["interdependence.csv", "radar.csv", "summary.json"];
    write_file(dir, "interdependence.csv", |b| write_interdependence_csv(b, inter))?;
    let rows: Vec<(String, Vec<f64>)> = inter.rows.iter().map(|r| (r.family.clone(), r.values.clone())).collect();
    write_file(dir, "radar.csv", |b| write_radar_csv(b, &inter.objectives, &rows))?;
    if let Some(c) = combined {
        write_file(dir, "combined_eval.csv", |b| write_combined_csv(b, c))?;
        write_file(dir, "boxstats.json", |b| json_bytes(b, &combined_box_stats(c)?))?;
        write_file(dir, "taps_hist.csv", |b| write_taps_csv(b, &combined_taps(c, cfg.tap_min_count)))?;
        written.extend(["combined_eval.csv", "boxstats.json", "taps_hist.csv"]);
    }
    write_file(dir, "summary.json", |b| json_bytes(b, &summary(network, cfg, inter, combined)?))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{MatrixRow, INITIAL};

    fn inter() -> InterdependenceResult {
        let objectives = ObjectiveSpec::standard()[..2].to_vec();
        let rows = vec![
            MatrixRow {
                family: INITIAL.into(),
                values: vec![0.5, 0.25],
                cases_used: 2,
                failures: 0,
                flagged: false,
            },
            MatrixRow {
                family: "B.U".into(),
                values: vec![0.125, 1.0],
                cases_used: 1,
                failures: 1,
                flagged: true,
            },
        ];
        let stats = (0..2)
            .map(|o| column_stats(&rows.iter().map(|r| r.values[o]).collect::<Vec<_>>()).unwrap())
            .collect();
        InterdependenceResult {
            format_version: FORMAT_VERSION,
            objectives,
            case_ids: vec![3, 1],
            families: vec![],
            rows,
            stats,
            diagonal_violations: vec![],
        }
    }

    #[test]
    fn matrix_csv_round_trips() {
        let res = inter();
        let mut buf = Vec::new();
        write_interdependence_csv(&mut buf, &res).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("format_version,family,B.U,G.Q,cases,failures,flagged\n"));
        let t = read_matrix_csv(&text).unwrap();
        assert_eq!(t.objectives, res.objectives);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1], ("B.U".to_string(), vec![0.125, 1.0]));
        assert_eq!(t.means().unwrap(), res.means());
        assert!((t.sigma.unwrap()[0] - res.stats[0].sigma).abs() == 0.0);
    }

    #[test]
    fn matrix_without_stats_rows_computes_means() {
        let t = read_matrix_csv("family,B.U,E.Q\na,1,2\nb,3,4\n").unwrap();
        assert_eq!(t.means().unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn bad_matrices_are_rejected() {
        for bad in [
            "family,B.U\na,x\n",
            "family,B.U\na,inf\n",
            "fam,B.U\na,1\n",
            "family,B.Q\na,1\n",
            "family\na\n",
            "format_version,family,B.U\n2,a,1\n",
            "family,B.U\n",
            "family,B.U\n,1\n",
        ] {
            assert!(read_matrix_csv(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_configuration() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 7;
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a.clone()).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn report_writes_matrix_files() {
        let dir = tempfile::tempdir().unwrap();
        let names = write_report(dir.path(), "net", &PipelineConfig::default(), &inter(), None).unwrap();
        assert_eq!(names, vec!["interdependence.csv", "radar.csv", "summary.json"]);
        let radar = fs::read_to_string(dir.path().join("radar.csv")).unwrap();
        assert_eq!(radar, "format_version,family,B.U,G.Q\n1,initial,1,0\n1,B.U,0,1\n");
        let s: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.case_ids, vec![3, 1]);
        assert!(s.families[1].flagged);
    }
}
