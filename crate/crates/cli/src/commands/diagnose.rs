use std::path::{Path, PathBuf};

use asmcmc::diagnostics::{
    diagnose as diagnose_chain, kl_to_standard_normal, linspace, DiagnoseOptions, DiagnosticsReport, Kde,
    MomentIntervals,
};
use asmcmc::io::{read_chain_csv, read_matrix_csv};
use asmcmc::sampler::Chain;
use serde::Serialize;

use crate::error::ConfigError;
use crate::output::{num, read_json, sidecar_path, Outputs};

const KDE_GRID: (f64, f64, usize) = (-5.0, 5.0, 201);

pub struct DiagnoseArgs {
    pub chains: Vec<PathBuf>,
    pub labels: Option<Vec<String>>,
    pub burn_in: Option<usize>,
    pub transform: Option<PathBuf>,
    pub transform_coords: usize,
    pub options: DiagnoseOptions,
}

/// Marginal of `ŷ_k = ŵ_kᵀ x` compared with the standard Gaussian prior.
#[derive(Serialize)]
struct TransformedMarginal {
    coordinate: usize,
    kl_to_standard_normal: f64,
}

/// Moments of a chain relative to those of the reference (first) chain,
/// against the reference's batch-means intervals shifted the same way.
#[derive(Serialize)]
struct ShiftedMoments {
    coordinate: usize,
    mean_shift: f64,
    mean_interval: (f64, f64),
    mean_inside: bool,
    variance_shift: f64,
    variance_interval: (f64, f64),
    variance_inside: bool,
}

#[derive(Serialize)]
struct ChainDiagnostics {
    file: String,
    burn_in: usize,
    forward_calls: Option<u64>,
    min_ess: f64,
    report: DiagnosticsReport,
    shifted_moments: Option<Vec<ShiftedMoments>>,
    transformed: Option<Vec<TransformedMarginal>>,
}

/// One row of the summary table.
#[derive(Serialize)]
struct SummaryRow {
    label: String,
    steps: usize,
    acceptance: f64,
    min_ess: f64,
    forward_calls: Option<u64>,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    summary: Vec<SummaryRow>,
    chains: Vec<ChainDiagnostics>,
}

fn sidecar_field(chain: &Path, key: &str) -> anyhow::Result<Option<u64>> {
    let p = sidecar_path(chain);
    if !p.exists() {
        return Ok(None);
    }
    let v: serde_json::Value = read_json(&p)?;
    Ok(v.get(key).and_then(|x| x.as_u64()))
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "chain".into())
}

fn transformed(chain: &Chain, w: &nalgebra::DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let col = w.column(c);
            chain
                .states()
                .map(|x| x.iter().zip(col.iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

pub fn diagnose(args: &DiagnoseArgs, out: &Outputs) -> anyhow::Result<()> {
    if args.chains.is_empty() {
        return Err(ConfigError("diagnose needs at least one chain file".into()).into());
    }
    let labels = match &args.labels {
        Some(l) if l.len() != args.chains.len() => {
            return Err(ConfigError(format!(
                "{} labels for {} chains",
                l.len(),
                args.chains.len()
            ))
            .into())
        }
        Some(l) => l.clone(),
        None => args.chains.iter().map(|p| label_of(p)).collect(),
    };
    let mut unique = labels.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != labels.len() {
        return Err(ConfigError("chain labels must be distinct (use --labels)".into()).into());
    }
    let transform = match &args.transform {
        Some(p) => Some(read_matrix_csv(p)?),
        None => None,
    };
    let mut names = vec!["diagnostics.json".to_string(), "table.csv".to_string()];
    for l in &labels {
        names.push(format!("acf_{l}.csv"));
        if transform.is_some() {
            names.push(format!("kde_{l}.csv"));
        }
    }
    out.claim(&names.iter().map(String::as_str).collect::<Vec<_>>())?;

    let mut results = Vec::with_capacity(labels.len());
    let mut reference: Option<Vec<MomentIntervals>> = None;
    for (path, label) in args.chains.iter().zip(&labels) {
        let full = read_chain_csv(path)?;
        let burn_in = match args.burn_in {
            Some(b) => b,
            None => sidecar_field(path, "burn_in")?.unwrap_or(0) as usize,
        };
        if burn_in >= full.len() {
            return Err(ConfigError(format!(
                "{}: burn-in {burn_in} leaves no states of {}",
                path.display(),
                full.len()
            ))
            .into());
        }
        let chain = full.discard(burn_in);
        let report = diagnose_chain(&chain, label, args.options)?;

        let lags = report.acf.first().map_or(0, |a| a.len());
        let acf_rows: Vec<Vec<String>> = (0..lags)
            .map(|k| {
                let mut row = vec![k.to_string()];
                row.extend(report.acf.iter().map(|a| num(a[k])));
                row
            })
            .collect();
        let header = std::iter::once("lag".to_string())
            .chain((0..chain.dim()).map(|j| format!("x{j}")))
            .collect::<Vec<_>>()
            .join(",");
        out.write_table(&format!("acf_{label}.csv"), &header, &acf_rows)?;

        let shifted = match &reference {
            Some(r) if r.len() == report.cbm_ci.len() => Some(
                report
                    .cbm_ci
                    .iter()
                    .zip(r)
                    .enumerate()
                    .map(|(j, (c, r))| ShiftedMoments {
                        coordinate: j,
                        mean_shift: c.mean.mean - r.mean.mean,
                        mean_interval: r.mean.shifted(r.mean.mean),
                        mean_inside: r.mean.contains(c.mean.mean),
                        variance_shift: c.variance.mean - r.variance.mean,
                        variance_interval: r.variance.shifted(r.variance.mean),
                        variance_inside: r.variance.contains(c.variance.mean),
                    })
                    .collect(),
            ),
            _ => None,
        };
        if reference.is_none() {
            reference = Some(report.cbm_ci.clone());
        }

        let marginals = match &transform {
            Some(w) if w.nrows() == chain.dim() => {
                let k = args.transform_coords.min(w.ncols());
                let ys = transformed(&chain, w, k);
                let grid = linspace(KDE_GRID.0, KDE_GRID.1, KDE_GRID.2);
                let mut columns = Vec::with_capacity(k);
                let mut marginals = Vec::with_capacity(k);
                for (c, y) in ys.iter().enumerate() {
                    columns.push(Kde::from_series(y)?.density_1d(&grid));
                    marginals.push(TransformedMarginal {
                        coordinate: c,
                        kl_to_standard_normal: kl_to_standard_normal(y)?,
                    });
                }
                let rows: Vec<Vec<String>> = grid
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let mut row = vec![num(*g)];
                        row.extend(columns.iter().map(|c| num(c[i])));
                        row
                    })
                    .collect();
                let header = std::iter::once("y".to_string())
                    .chain((0..k).map(|c| format!("density_y{c}")))
                    .collect::<Vec<_>>()
                    .join(",");
                out.write_table(&format!("kde_{label}.csv"), &header, &rows)?;
                Some(marginals)
            }
            Some(w) => {
                eprintln!(
                    "note: {label} has {} coordinates, transform has {} rows; skipping marginals",
                    chain.dim(),
                    w.nrows()
                );
                None
            }
            None => None,
        };

        results.push(ChainDiagnostics {
            file: path.display().to_string(),
            burn_in,
            forward_calls: sidecar_field(path, "forward_calls")?,
            min_ess: report.min_ess(),
            report,
            shifted_moments: shifted,
            transformed: marginals,
        });
    }

    let summary: Vec<SummaryRow> = results
        .iter()
        .map(|r| SummaryRow {
            label: r.report.meta.label.clone(),
            steps: r.report.meta.steps,
            acceptance: r.report.acceptance,
            min_ess: r.min_ess,
            forward_calls: r.forward_calls,
        })
        .collect();
    let table_rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                s.steps.to_string(),
                num(s.acceptance),
                num(s.min_ess),
                s.forward_calls.map(|c| c.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    out.write_table("table.csv", "label,steps,acceptance,min_ess,forward_calls", &table_rows)?;
    print_table(&summary);
    for r in &results {
        if let Some(s) = &r.shifted_moments {
            let means = s.iter().filter(|m| m.mean_inside).count();
            let vars = s.iter().filter(|m| m.variance_inside).count();
            println!(
                "{}: {means}/{n} means and {vars}/{n} variances inside the first chain's {:.0}% intervals",
                r.report.meta.label,
                100.0 * args.options.level,
                n = s.len()
            );
        }
        if let Some(m) = &r.transformed {
            let kls: Vec<String> = m
                .iter()
                .map(|t| format!("y{}: {:.4}", t.coordinate + 1, t.kl_to_standard_normal))
                .collect();
            println!("{}: KL of transformed marginals to N(0, 1): {}", r.report.meta.label, kls.join(", "));
        }
    }
    out.write_json(
        "diagnostics.json",
        &DiagnoseOutput {
            summary,
            chains: results,
        },
    )?;
    Ok(())
}

fn print_table(rows: &[SummaryRow]) {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(24);
    let line = |name: &str, cells: Vec<String>| {
        print!("{name:<width$}");
        for c in cells {
            print!(" {c:>16}");
        }
        println!();
    };
    line("", rows.iter().map(|r| r.label.clone()).collect());
    line("Chain length", rows.iter().map(|r| r.steps.to_string()).collect());
    line(
        "Acceptance rate",
        rows.iter().map(|r| format!("{:.1}%", 100.0 * r.acceptance)).collect(),
    );
    line("Min. eff. sample size", rows.iter().map(|r| format!("{:.0}", r.min_ess)).collect());
    line(
        "Forward model evals",
        rows.iter()
            .map(|r| r.forward_calls.map_or("-".into(), |c| c.to_string()))
            .collect(),
    );
}
