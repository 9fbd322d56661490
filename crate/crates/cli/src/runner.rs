//! Subcommand implementations: sweep execution, analysis tables, and CSV
//! artifact emission.
//!
//! Artifacts are deterministic functions of (config, seeds, tool version):
//! no timestamps, stable float formatting, runs ordered by (load factor,
//! replication). Re-running a manifest reproduces every byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use dcp_core::analysis::{
    capacity_boundary_along, r_infinity, theta_dcp_lower, theta_table, DirectionGrid, RinfParams,
    ThetaTable,
};
use dcp_core::rng::derive_seed;
use dcp_core::sim::{run_sim, stability_verdict, RunOptions, SimMetrics};
use dcp_core::ArrivalProcess;

use crate::config::{ExperimentConfig, Manifest};

pub const MANIFEST_VERSION: u32 = 1;

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One run of the sweep: a load factor with the stream seed derived from
/// the root seed and the (load index, replication index) pair.
#[derive(Debug, Clone, Copy)]
struct RunKey {
    gamma: f64,
    seed: u64,
}

fn sweep_keys(cfg: &ExperimentConfig) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for (gamma_idx, &gamma) in cfg.arrivals.load_factors.iter().enumerate() {
        for replication in 0..cfg.sim.replications {
            keys.push(RunKey {
                gamma,
                seed: derive_seed(cfg.sim.root_seed, &[gamma_idx as u64, replication as u64]),
            });
        }
    }
    keys
}

fn run_csv(metrics: &SimMetrics) -> String {
    let mut out = String::from("t_window_end,mean_total_queue,mean_q1,mean_q2,current_N1\n");
    for w in &metrics.windows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            w.t_end, w.mean_total, w.mean_q1, w.mean_q2, w.n1
        ));
    }
    out
}

fn rounds_csv(metrics: &SimMetrics) -> String {
    let mut out = String::from("round,t_start,n1_candidate,phi_r,adopted,n1,n3,phi_update\n");
    for r in &metrics.rounds {
        let phi_update = r
            .phi_update
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "".to_string());
        out.push_str(&format!(
            "{},{},{},{:.6},{},{},{},{}\n",
            r.round, r.t_start, r.n1_candidate, r.phi_r, r.adopted, r.n1, r.n3, phi_update
        ));
    }
    out
}

/// Runs the full (load factor x replication) sweep and writes the artifact
/// directory: manifest, per-run occupancy CSVs, per-run round logs, and the
/// verdict summary.
pub fn simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let channel = cfg.channel_model()?;
    let rates = cfg.rate_model()?;
    let policy = cfg.policy_spec()?;

    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;

    let keys = sweep_keys(cfg);
    let results: Vec<(RunKey, SimMetrics)> = keys
        .par_iter()
        .map(|key| {
            let arrivals = ArrivalProcess::new(
                [
                    cfg.arrivals.base[0] * key.gamma,
                    cfg.arrivals.base[1] * key.gamma,
                ],
                cfg.arrivals.a_max,
            )
            .map_err(|e| anyhow!("arrivals at gamma {}: {e}", key.gamma))?;
            let opts = RunOptions::new(cfg.sim.horizon, cfg.sim.window, key.seed);
            let metrics = run_sim(&channel, rates, &policy, &arrivals, &opts)
                .map_err(|e| anyhow!("run gamma {} seed {}: {e}", key.gamma, key.seed))?;
            Ok((*key, metrics))
        })
        .collect::<Result<_>>()?;

    let mut verdicts = String::from("gamma,seed,verdict,final_mean\n");
    for (key, metrics) in &results {
        let name = format!("run_g{}_s{}", key.gamma, key.seed);
        write_atomic(
            &out_dir.join("runs").join(format!("{name}.csv")),
            &run_csv(metrics),
        )?;
        if !metrics.rounds.is_empty() {
            write_atomic(
                &out_dir.join("rounds").join(format!("{name}.csv")),
                &rounds_csv(metrics),
            )?;
        }
        let samples: Vec<(u64, f64)> = metrics
            .windows
            .iter()
            .map(|w| (w.t_end, w.mean_total))
            .collect();
        let verdict = stability_verdict(&samples)
            .map(|v| v.to_string())
            .unwrap_or_else(|_| "too_few_samples".to_string());
        verdicts.push_str(&format!(
            "{},{},{},{:.6}\n",
            key.gamma,
            key.seed,
            verdict,
            metrics.final_mean()
        ));
    }
    write_atomic(&out_dir.join("verdicts.csv"), &verdicts)?;

    println!(
        "simulate: {} runs ({} load factors x {} replications) -> {}",
        results.len(),
        cfg.arrivals.load_factors.len(),
        cfg.sim.replications,
        out_dir.display()
    );
    Ok(())
}

fn theta_csv(table: &ThetaTable, dcp_bound: Option<f64>) -> String {
    let mut out = String::from("n1,theta_static\n");
    for &n1 in &table.n1_set {
        out.push_str(&format!("{},{:.6}\n", n1, table.theta_static(n1).unwrap()));
    }
    out.push_str(&format!("theta_inf,{:.6}\n", table.theta_inf().0));
    if let Some(bound) = dcp_bound {
        out.push_str(&format!("theta_dcp,{bound:.6}\n"));
    }
    out
}

fn directions_csv(table: &ThetaTable) -> String {
    let mut header = String::from("angle_deg,x1,x2,chi");
    for &n1 in &table.n1_set {
        header.push_str(&format!(",phi_{n1},phi_se_{n1}"));
    }
    header.push_str(",n1_tilde,phi_tilde,ratio\n");
    let mut out = header;
    for row in &table.rows {
        let (n1_t, phi_t) = row.phi_tilde();
        out.push_str(&format!(
            "{:.4},{:.6},{:.6},{:.6}",
            row.angle.to_degrees(),
            row.x[0],
            row.x[1],
            row.chi
        ));
        for e in &row.phi {
            out.push_str(&format!(",{:.6},{:.3e}", e.mean, e.se));
        }
        out.push_str(&format!(",{},{:.6},{:.6}\n", n1_t, phi_t, phi_t / row.chi));
    }
    out
}

/// Computes the scaling-factor table over the direction grid and writes the
/// frame-length summary plus the per-direction detail.
pub fn analyze_theta(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    with_dcp_bound: bool,
    theta_phi: f64,
) -> Result<()> {
    let channel = cfg.channel_model()?;
    let rates = cfg.rate_model()?;
    let variant = cfg.variant()?;
    let grid = DirectionGrid::new(cfg.analysis.direction_grid);
    let table = theta_table(
        &channel,
        &rates,
        &variant,
        &cfg.dcp.n1_set,
        &grid,
        cfg.analysis.mc_samples,
        cfg.analysis.solver_grid,
        cfg.analysis.seed,
    );

    let dcp_bound = if with_dcp_bound {
        let params = cfg.rinf_params_or_default()?;
        Some(
            theta_dcp_lower(cfg.dcp.alpha, theta_phi, &params, &table)
                .map_err(|e| anyhow!("dcp bound: {e}"))?,
        )
    } else {
        None
    };

    write_atomic(
        &out_dir.join("theta_table.csv"),
        &theta_csv(&table, dcp_bound),
    )?;
    write_atomic(
        &out_dir.join("theta_directions.csv"),
        &directions_csv(&table),
    )?;

    let (ti, arg) = table.theta_inf();
    let (bn, bv) = table.theta_static_best();
    println!(
        "theta_inf = {:.4} (binding angle {:.2} deg); best static: N1 = {} with {:.4} -> {}",
        ti,
        table.rows[arg].angle.to_degrees(),
        bn,
        bv,
        out_dir.display()
    );
    Ok(())
}

/// Frame-quality profile for a single backlog direction.
pub fn analyze_phi(cfg: &ExperimentConfig, out_dir: &Path, direction_deg: f64) -> Result<()> {
    if !(0.0..=90.0).contains(&direction_deg) {
        bail!("direction must lie in [0, 90] degrees");
    }
    let channel = cfg.channel_model()?;
    let rates = cfg.rate_model()?;
    let variant = cfg.variant()?;
    let psi = direction_deg.to_radians();
    let x = [psi.cos(), psi.sin()];
    let mut rng = dcp_core::rng::stream_rng(
        derive_seed(cfg.analysis.seed, &[direction_deg.to_bits()]),
        dcp_core::rng::STREAM_ANALYSIS,
    );
    let chi = dcp_core::chi_of(x, &channel, &rates, cfg.analysis.solver_grid);
    let row = dcp_core::phi_row(
        x,
        &channel,
        &rates,
        &variant,
        cfg.analysis.solver_grid,
        &cfg.dcp.n1_set,
        cfg.analysis.mc_samples,
        &mut rng,
    );
    let mut out = String::from("n1,phi,phi_se,chi,ratio\n");
    for e in &row {
        out.push_str(&format!(
            "{},{:.6},{:.3e},{:.6},{:.6}\n",
            e.n1,
            e.mean,
            e.se,
            chi,
            e.mean / chi
        ));
        println!(
            "N1 = {}: phi = {:.4} (se {:.1e}), phi/chi = {:.4}",
            e.n1,
            e.mean,
            e.se,
            e.mean / chi
        );
    }
    write_atomic(&out_dir.join("phi_direction.csv"), &out)?;
    Ok(())
}

/// Boundary crossing of the capacity region along a direction.
pub fn capacity(cfg: &ExperimentConfig, out_dir: &Path, direction: [f64; 2]) -> Result<()> {
    if !(direction[0] >= 0.0 && direction[1] >= 0.0 && (direction[0] > 0.0 || direction[1] > 0.0)) {
        bail!("capacity direction must be nonnegative and nonzero");
    }
    let channel = cfg.channel_model()?;
    let rates = cfg.rate_model()?;
    let weights = DirectionGrid::new(cfg.analysis.direction_grid);
    let b = capacity_boundary_along(
        direction,
        &weights,
        &channel,
        &rates,
        cfg.analysis.solver_grid,
    );
    println!(
        "boundary along ({}, {}): point = ({:.4}, {:.4}), scale t* = {:.6}",
        direction[0], direction[1], b.point[0], b.point[1], b.t_star
    );
    let out = format!(
        "dx,dy,t_star,point_x,point_y,binding_w1,binding_w2\n{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        direction[0],
        direction[1],
        b.t_star,
        b.point[0],
        b.point[1],
        b.binding_weight[0],
        b.binding_weight[1]
    );
    write_atomic(&out_dir.join("boundary.csv"), &out)?;
    Ok(())
}

/// Prints the round-statistics ratio for explicit parameters.
pub fn rinf(delta: f64, rho_phi: f64, l1: u32, k_max: u64) -> Result<()> {
    let params = RinfParams {
        delta,
        rho_phi,
        l1,
        k_max,
    };
    let r = r_infinity(&params).map_err(|e| anyhow!("{e}"))?;
    println!("{r:.10}");
    Ok(())
}

/// Recomputes stability verdicts from a previously written run directory.
pub fn verdict(run_dir: &Path) -> Result<()> {
    let runs = run_dir.join("runs");
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)
        .with_context(|| format!("reading {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no run CSVs under {}", runs.display());
    }
    println!("gamma,seed,verdict,mean_of_windows");
    for path in paths {
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        // run_g<gamma>_s<seed>
        let rest = stem.strip_prefix("run_g").unwrap_or(&stem);
        let (gamma, seed) = rest.split_once("_s").unwrap_or((rest, "?"));
        let mut rdr =
            csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let t: u64 = record[0].parse()?;
            let y: f64 = record[1].parse()?;
            samples.push((t, y));
        }
        let v = stability_verdict(&samples)
            .map(|v| v.to_string())
            .unwrap_or_else(|e| format!("error: {e}"));
        let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len().max(1) as f64;
        println!("{gamma},{seed},{v},{mean:.6}");
    }
    Ok(())
}
