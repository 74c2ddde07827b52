//! `report`: plots and summary tables from a run directory.
//!
//! Six plot families are produced when their inputs exist: intensity vs
//! depth per job, fit overlays, peak intensity, Michelson contrast, RMS
//! contrast and entropy vs visibility. Each plot is written as SVG with its
//! data alongside as CSV. Families whose inputs are missing are listed as
//! gaps in `summary.md`.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use fogbench_core::scene::SensorKind;

use crate::error::Result;
use crate::fit::{self, CurvePoint, FitRow};
use crate::metrics::{self, ContrastRow, EntropyRow, PeakRow};
use crate::output::{self, EntryKind, JobKey, FITS_DIR, REPORT_DIR};
use crate::svg::{Plot, Series, Style};
use crate::tracecsv::{self, format_sig9};

pub const SUMMARY_FILE: &str = "summary.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Intensity,
    FitOverlay,
    PeakIntensity,
    Michelson,
    Rms,
    Entropy,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::Intensity, Family::FitOverlay, Family::PeakIntensity, Family::Michelson, Family::Rms, Family::Entropy];

    pub fn name(self) -> &'static str {
        match self {
            Family::Intensity => "intensity_vs_depth",
            Family::FitOverlay => "fit_overlay",
            Family::PeakIntensity => "peak_vs_visibility",
            Family::Michelson => "michelson_vs_visibility",
            Family::Rms => "rms_vs_visibility",
            Family::Entropy => "entropy_vs_visibility",
        }
    }

    fn requires(self) -> &'static str {
        match self {
            Family::Intensity => "trace files from `simulate`",
            Family::FitOverlay => "fits/results.csv and fits/curves.csv from `fit`",
            Family::PeakIntensity => "metrics/peaks.csv from `metrics`",
            Family::Michelson | Family::Rms => "metrics/contrast.csv from `metrics`",
            Family::Entropy => "metrics/entropy.csv from `metrics` (needs rendered frames)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSummary {
    /// Families written, with the number of plots in each.
    pub present: BTreeMap<Family, usize>,
    pub gaps: Vec<Family>,
}

pub fn report_run(run_dir: &Path) -> Result<ReportSummary> {
    let manifest = output::read_manifest(run_dir)?;
    let out = run_dir.join(REPORT_DIR);
    let mut summary = ReportSummary::default();
    let mut tables = String::new();

    // Intensity vs depth, one plot per job.
    let mut jobs: Vec<(JobKey, Vec<String>)> = Vec::new();
    for e in manifest.iter().filter(|e| e.kind == EntryKind::Trace) {
        match jobs.iter_mut().find(|(k, _)| *k == e.job()) {
            Some((_, v)) => v.push(e.path.clone()),
            None => jobs.push((e.job(), vec![e.path.clone()])),
        }
    }
    let mut trace_data: BTreeMap<String, Vec<tracecsv::TraceRow>> = BTreeMap::new();
    for (key, paths) in &jobs {
        let mut plot = Plot::new(title(key), "depth [m]", "intensity");
        for (i, p) in paths.iter().enumerate() {
            let rows = tracecsv::read_path(&output::resolve(run_dir, p))?;
            let rho = rows.first().map_or(0.0, |r| r.target_rho);
            plot.series.push(Series {
                label: rho_label(rho),
                points: rows.iter().map(|r| (r.depth_m, r.intensity_mean)).collect(),
                style: Style::Line,
                color: i,
            });
            trace_data.insert(p.clone(), rows);
        }
        emit(&out.join(Family::Intensity.name()), &key.stem(), &plot)?;
    }
    record(&mut summary, Family::Intensity, jobs.len());

    // Fit overlays.
    let results_path = run_dir.join(FITS_DIR).join(fit::RESULTS_FILE);
    let curves_path = run_dir.join(FITS_DIR).join(fit::CURVES_FILE);
    if results_path.exists() && curves_path.exists() {
        let results = fit::read_results(&results_path)?;
        let curves = fit::read_curves(&curves_path)?;
        let mut count = 0;
        for (key, paths) in &jobs {
            let fitted: Vec<&String> = paths.iter().filter(|p| results.iter().any(|r| &r.source == *p)).collect();
            if fitted.is_empty() {
                continue;
            }
            let mut plot = Plot::new(format!("{} (fit)", title(key)), "depth [m]", "intensity");
            for (i, p) in fitted.iter().enumerate() {
                let rows = &trace_data[*p];
                let rho = rows.first().map_or(0.0, |r| r.target_rho);
                plot.series.push(Series {
                    label: format!("{} data", rho_label(rho)),
                    points: rows.iter().map(|r| (r.depth_m, r.intensity_mean)).collect(),
                    style: Style::Markers,
                    color: i,
                });
                plot.series.push(Series {
                    label: format!("{} fit", rho_label(rho)),
                    points: curves.iter().filter(|c| &c.source == *p).map(|c: &CurvePoint| (c.depth_m, c.intensity_fit)).collect(),
                    style: Style::Dashed,
                    color: i,
                });
            }
            emit(&out.join(Family::FitOverlay.name()), &key.stem(), &plot)?;
            count += 1;
        }
        record(&mut summary, Family::FitOverlay, count);
        tables.push_str(&fit_table(&results));
    } else {
        summary.gaps.push(Family::FitOverlay);
    }

    let (entropy, contrast, peaks) = metrics::read_output(run_dir)?;

    match peaks {
        Some(rows) if !rows.is_empty() => {
            let n = by_sensor(&rows, |r| r.sensor, |r| r.scenario.as_str(), |plot, rows: Vec<&PeakRow>| {
                let mut groups: BTreeMap<(String, u64), Vec<(f64, f64)>> = BTreeMap::new();
                for r in rows {
                    groups
                        .entry((r.fog_type.as_str().to_owned(), r.target_rho.to_bits()))
                        .or_default()
                        .push((r.visibility_m, r.i_peak));
                }
                for (i, ((fog, rho), pts)) in groups.into_iter().enumerate() {
                    plot.series.push(line(format!("{fog} {}", rho_label(f64::from_bits(rho))), pts, i));
                }
            }, "peak intensity", &out.join(Family::PeakIntensity.name()))?;
            record(&mut summary, Family::PeakIntensity, n);
        }
        _ => summary.gaps.push(Family::PeakIntensity),
    }

    match contrast {
        Some(rows) if !rows.is_empty() => {
            for (family, ylabel, value) in [
                (Family::Michelson, "Michelson contrast", (|r: &ContrastRow| r.michelson.unwrap_or(f64::NAN)) as fn(&ContrastRow) -> f64),
                (Family::Rms, "RMS contrast", |r: &ContrastRow| r.rms),
            ] {
                let n = by_sensor(&rows, |r| r.sensor, |r| r.scenario.as_str(), |plot, rows: Vec<&ContrastRow>| {
                    fog_lines(plot, rows.iter().map(|r| (r.fog_type.as_str(), r.visibility_m, value(r))));
                }, ylabel, &out.join(family.name()))?;
                record(&mut summary, family, n);
            }
            tables.push_str(&contrast_table(&rows));
        }
        _ => summary.gaps.extend([Family::Michelson, Family::Rms]),
    }

    match entropy {
        Some(rows) if !rows.is_empty() => {
            let n = by_sensor(&rows, |r| r.sensor, |r| r.scenario.as_str(), |plot, rows: Vec<&EntropyRow>| {
                fog_lines(plot, rows.iter().map(|r| (r.fog_type.as_str(), r.visibility_m, r.entropy_mean)));
            }, "entropy [bit]", &out.join(Family::Entropy.name()))?;
            record(&mut summary, Family::Entropy, n);
            tables.push_str(&entropy_table(&rows));
        }
        _ => summary.gaps.push(Family::Entropy),
    }

    output::write_atomic(&out.join(SUMMARY_FILE), summary_markdown(&summary, &tables).as_bytes())?;
    Ok(summary)
}

fn record(summary: &mut ReportSummary, family: Family, plots: usize) {
    if plots > 0 {
        summary.present.insert(family, plots);
    } else {
        summary.gaps.push(family);
    }
}

fn emit(dir: &Path, stem: &str, plot: &Plot) -> Result<()> {
    output::write_atomic(&dir.join(format!("{stem}.svg")), plot.to_svg().as_bytes())?;
    output::write_atomic(&dir.join(format!("{stem}.csv")), &plot.to_csv())
}

/// One visibility plot per (scenario, sensor).
fn by_sensor<'a, R>(
    rows: &'a [R],
    sensor: impl Fn(&R) -> SensorKind,
    scenario: impl Fn(&R) -> &'static str,
    fill: impl Fn(&mut Plot, Vec<&'a R>),
    y_label: &str,
    dir: &Path,
) -> Result<usize> {
    let mut keys: Vec<(&'static str, SensorKind)> = Vec::new();
    for r in rows {
        let k = (scenario(r), sensor(r));
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for &(sc, se) in &keys {
        let mut plot = Plot::new(format!("{sc}, {} camera", se.as_str()), "visibility [m]", y_label);
        fill(&mut plot, rows.iter().filter(|r| scenario(r) == sc && sensor(r) == se).collect());
        emit(dir, &format!("{sc}-{}", se.as_str()), &plot)?;
    }
    Ok(keys.len())
}

fn fog_lines<'a>(plot: &mut Plot, rows: impl Iterator<Item = (&'a str, f64, f64)>) {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (fog, v, y) in rows {
        groups.entry(fog).or_default().push((v, y));
    }
    for (i, (fog, pts)) in groups.into_iter().enumerate() {
        plot.series.push(line(format!("{fog} fog"), pts, i));
    }
}

fn line(label: String, mut points: Vec<(f64, f64)>, color: usize) -> Series {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Series { label, points, style: Style::Line, color }
}

fn title(key: &JobKey) -> String {
    format!(
        "{}, {} fog, V = {} m, {} camera",
        key.scenario.as_str(),
        key.fog_type.as_str(),
        format_sig9(key.visibility_m),
        key.sensor.as_str()
    )
}

fn rho_label(rho: f64) -> String {
    format!("{} % target", format_sig9(rho * 100.0))
}

fn fit_table(rows: &[FitRow]) -> String {
    let mut s = String::from("\n## Fits\n\n| trace | rho | V [m] | i0 | I_inf | d0 [m] | beta_a [1/m] | rms | converged |\n|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {:.4} | {:.2} | {:.4} | {:.2e} | {} |",
            r.source,
            format_sig9(r.target_rho),
            format_sig9(r.visibility_m),
            r.i0,
            r.i_inf,
            r.d0_m,
            r.beta_a_per_m,
            r.rms_residual,
            r.converged
        );
    }
    s
}

fn contrast_table(rows: &[ContrastRow]) -> String {
    let mut s = String::from("\n## Contrast\n\n| scenario | fog | V [m] | sensor | Michelson | RMS |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let m = r.michelson.map_or_else(|| "n/a".to_owned(), |m| format!("{m:.4}"));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {m} | {:.4} |",
            r.scenario.as_str(),
            r.fog_type.as_str(),
            format_sig9(r.visibility_m),
            r.sensor.as_str(),
            r.rms
        );
    }
    s
}

fn entropy_table(rows: &[EntropyRow]) -> String {
    let mut s = String::from("\n## Entropy\n\n| scenario | fog | V [m] | sensor | frames | bits | mean | std |\n|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {:.3} | {:.3} |",
            r.scenario.as_str(),
            r.fog_type.as_str(),
            format_sig9(r.visibility_m),
            r.sensor.as_str(),
            r.frames,
            r.bit_depth,
            r.entropy_mean,
            r.entropy_std
        );
    }
    s
}

fn summary_markdown(summary: &ReportSummary, tables: &str) -> String {
    let mut s = String::from("# fogbench report\n\n## Plot families\n\n");
    for f in Family::ALL {
        match summary.present.get(&f) {
            Some(n) => {
                let _ = writeln!(s, "- {}: {n} plot(s) in `{}/`", f.name(), f.name());
            }
            None => {
                let _ = writeln!(s, "- {}: missing", f.name());
            }
        }
    }
    if !summary.gaps.is_empty() {
        s.push_str("\n## Gaps\n\n");
        for f in &summary.gaps {
            let _ = writeln!(s, "- {} needs {}", f.name(), f.requires());
        }
    }
    s.push_str(tables);
    s
}
