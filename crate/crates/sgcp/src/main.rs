//! Command-line entry point.
//!
//! `sgcp run <config>` executes one benchmark and writes CSV series plus a
//! run manifest, `sgcp mesh-dump <config>` writes the generated mesh, and
//! `sgcp sweep <config> <param>=<v1,v2,...>` repeats the run over a
//! parameter list (points run in parallel) and collects a summary table.
//!
//! Worker threads come from `--threads`, falling back to the
//! `SGCP_THREADS` environment variable and then to the available cores.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU8, Ordering};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use sgcp::cases::bicrystal_shear::BicrystalShearResults;
use sgcp::cases::bicrystal_tension::BicrystalTensionResults;
use sgcp::cases::shear_layer::ShearLayerResults;
use sgcp::config::{parse_config, CaseConfig, CaseKind};
use sgcp::fem::MixedMesh;
use sgcp::output::{write_manifest, write_series, Series, Value};
use sgcp::{Error, Result};

#[derive(Parser)]
#[command(name = "sgcp", version, about = "Planar strain-gradient crystal plasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: SGCP_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// q = errors only, n = progress summaries, v = chatty.
    #[arg(long, global = true, default_value = "n")]
    log_level: LogLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Q,
    N,
    V,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write its output series.
    Run { config: PathBuf },
    /// Generate the case mesh and write node/element tables.
    MeshDump { config: PathBuf },
    /// Run the case once per value of one scalar parameter.
    Sweep {
        config: PathBuf,
        /// Parameter list, e.g. material.zeta=0,500,2000
        spec: String,
    },
}

static VERBOSITY: AtomicU8 = AtomicU8::new(1);

fn say(level: u8, msg: impl Display) {
    if VERBOSITY.load(Ordering::Relaxed) >= level {
        eprintln!("{msg}");
    }
}

fn main() {
    let cli = Cli::parse();
    VERBOSITY.store(
        match cli.log_level {
            LogLevel::Q => 0,
            LogLevel::N => 1,
            LogLevel::V => 2,
        },
        Ordering::Relaxed,
    );
    if let Some(n) = thread_count(cli.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error (config): could not size the thread pool: {e}");
            std::process::exit(2);
        }
    }
    let code = match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (category, code) = match &e {
                Error::Config(_) | Error::InvalidParameter(_) => ("config", 2),
                Error::Mesh(_) => ("mesh", 3),
                Error::Solver(_) | Error::Nonphysical(_) => ("solver", 4),
                Error::Io(_) => ("io", 5),
            };
            eprintln!("error ({category}): {e}");
            code
        }
    };
    std::process::exit(code);
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("SGCP_THREADS").ok().and_then(|v| v.parse().ok())
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(config)?;
            run_case(&cfg, &cli.out)
        }
        Command::MeshDump { config } => {
            let cfg = load_config(config)?;
            mesh_dump(&cfg, &cli.out)
        }
        Command::Sweep { config, spec } => {
            let cfg = load_config(config)?;
            sweep(&cfg, spec, &cli.out)
        }
    }
}

fn load_config(path: &Path) -> Result<CaseConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Executes the configured case and returns its output series.
fn execute(cfg: &CaseConfig) -> Result<Vec<Series>> {
    let solver = cfg.solver.to_solver();
    let samples = &cfg.output.sample_times;
    match cfg.case {
        CaseKind::ShearLayer => {
            let case = cfg.build_shear_layer()?;
            let res = case.run(&solver, samples)?;
            say(2, format!("shear layer: {} steps, {} cutbacks", res.stats.steps, res.stats.cutbacks));
            Ok(shear_layer_series(&res))
        }
        CaseKind::BicrystalShear => {
            let case = cfg.build_bicrystal_shear()?;
            let res = case.run(&solver, samples)?;
            say(2, format!("bicrystal shear: {} steps, {} cutbacks", res.stats.steps, res.stats.cutbacks));
            Ok(bicrystal_shear_series(&res))
        }
        CaseKind::BicrystalTension => {
            let case = cfg.build_bicrystal_tension()?;
            let res = case.run(&solver, samples)?;
            say(2, format!("bicrystal tension: {} steps, {} cutbacks", res.stats.steps, res.stats.cutbacks));
            Ok(tension_series(&res, &case.mesh()?))
        }
    }
}

fn run_case(cfg: &CaseConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let series = execute(cfg)?;
    let mut files = Vec::new();
    for s in &series {
        let path = write_series(out, s)?;
        say(2, format!("wrote {}", path.display()));
        files.push(format!("{}.csv", s.name));
    }
    write_manifest(out, cfg, start.elapsed().as_secs_f64(), &files)?;
    say(1, format!("{} series written to {}", series.len(), out.display()));
    Ok(())
}

/// Central finite differences of nodal values along a coordinate line.
fn gradient(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        g[i] = (v[b] - v[a]) / (x[b] - x[a]);
    }
    g
}

fn profile_name(idx: usize) -> String {
    format!("profile_{idx:02}")
}

fn shear_layer_series(res: &ShearLayerResults) -> Vec<Series> {
    let mut out = Vec::new();

    let mut ss = Series::new("stress_strain", &["step", "time", "Gamma", "sigma12_avg"]);
    let mut avg = Series::new(
        "averages",
        &["step", "time", "Gamma", "psi_defect_avg", "dissipation_avg", "dissipation_ho_avg"],
    );
    for r in &res.series {
        ss.push(vec![r.step.into(), r.t.into(), r.gamma.into(), r.sigma12.into()]);
        avg.push(vec![
            r.step.into(),
            r.t.into(),
            r.gamma.into(),
            r.psi_defect.into(),
            r.diss.into(),
            r.diss_ho.into(),
        ]);
    }
    out.push(ss);
    out.push(avg);

    for (i, p) in res.profiles.iter().enumerate() {
        let k = p.slip.len();
        let mut cols = vec!["x2".to_string(), "time".to_string(), "Gamma".to_string()];
        cols.push("plastic12".into());
        cols.push("dplastic12_dx2".into());
        for a in 0..k {
            cols.push(format!("slip_{a}"));
        }
        for a in 0..k {
            cols.push(format!("gnd_{a}"));
        }
        let mut s = Series {
            name: profile_name(i),
            columns: cols,
            rows: Vec::new(),
        };
        let grad = gradient(&res.x2, &p.plastic12);
        for (j, &x) in res.x2.iter().enumerate() {
            let mut row: Vec<Value> = vec![
                x.into(),
                p.t.into(),
                p.gamma.into(),
                p.plastic12[j].into(),
                grad[j].into(),
            ];
            for a in 0..k {
                row.push(p.slip[a][j].into());
            }
            for a in 0..k {
                row.push(p.gnd[a][j].into());
            }
            s.push(row);
        }
        out.push(s);
    }
    out
}

fn bicrystal_shear_series(res: &BicrystalShearResults) -> Vec<Series> {
    let mut out = Vec::new();

    let mut ss = Series::new("stress_strain", &["step", "time", "Gamma", "sigma12_avg"]);
    let mut gb = Series::new(
        "grain_boundary",
        &["step", "time", "Gamma", "psi_defect_avg", "dissipation_avg", "gb_dissipation", "gb_energy"],
    );
    for r in &res.series {
        ss.push(vec![r.step.into(), r.t.into(), r.gamma.into(), r.sigma12.into()]);
        gb.push(vec![
            r.step.into(),
            r.t.into(),
            r.gamma.into(),
            r.psi_defect.into(),
            r.diss_bulk.into(),
            r.diss_gb.into(),
            r.energy_gb.into(),
        ]);
    }
    out.push(ss);
    out.push(gb);

    for (i, p) in res.profiles.iter().enumerate() {
        let k = p.slip.len();
        let mut cols = vec!["x1".to_string(), "time".to_string(), "Gamma".to_string()];
        for a in 0..k {
            cols.push(format!("slip_{a}"));
        }
        for a in 0..k {
            cols.push(format!("gnd_{a}"));
        }
        let mut s = Series { name: profile_name(i), columns: cols, rows: Vec::new() };
        for (j, &x) in res.x1.iter().enumerate() {
            let mut row: Vec<Value> = vec![x.into(), p.t.into(), p.gamma.into()];
            for a in 0..k {
                row.push(p.slip[a][j].into());
            }
            for a in 0..k {
                row.push(p.gnd[a][j].into());
            }
            s.push(row);
        }
        out.push(s);

        let mut cols = vec!["x1".to_string(), "x2".to_string(), "time".to_string()];
        for a in 0..k {
            cols.push(format!("slip_a_{a}"));
            cols.push(format!("slip_b_{a}"));
            cols.push(format!("jump_{a}"));
        }
        let mut j = Series { name: format!("jumps_{i:02}"), columns: cols, rows: Vec::new() };
        for jm in &p.jumps {
            let mut row: Vec<Value> = vec![jm.x.x.into(), jm.x.y.into(), p.t.into()];
            for a in 0..k {
                row.push(jm.slip_a[a].into());
                row.push(jm.slip_b[a].into());
                row.push(jm.jump(a).into());
            }
            j.push(row);
        }
        out.push(j);
    }
    out
}

fn tension_series(res: &BicrystalTensionResults, mesh: &MixedMesh) -> Vec<Series> {
    let mut out = Vec::new();

    let mut ss = Series::new("stress_strain", &["step", "time", "Gamma", "sigma11_avg"]);
    let mut gb = Series::new(
        "grain_boundary",
        &["step", "time", "Gamma", "psi_defect_avg", "dissipation_avg", "gb_dissipation", "gb_energy"],
    );
    for r in &res.series {
        ss.push(vec![r.step.into(), r.t.into(), r.strain.into(), r.sigma11.into()]);
        gb.push(vec![
            r.step.into(),
            r.t.into(),
            r.strain.into(),
            r.psi_defect.into(),
            r.diss_bulk.into(),
            r.diss_gb.into(),
            r.energy_gb.into(),
        ]);
    }
    out.push(ss);
    out.push(gb);

    for (i, p) in res.profiles.iter().enumerate() {
        let k = p.slip.len();
        let mut cols = vec!["x1".to_string(), "time".to_string(), "Gamma".to_string()];
        for a in 0..k {
            cols.push(format!("slip_{a}"));
        }
        let mut s = Series { name: profile_name(i), columns: cols, rows: Vec::new() };
        for (j, &x) in res.x1.iter().enumerate() {
            let mut row: Vec<Value> = vec![x.into(), p.t.into(), p.strain.into()];
            for a in 0..k {
                row.push(p.slip[a][j].into());
            }
            s.push(row);
        }
        out.push(s);

        let mut cols = vec!["x1".to_string(), "x2".to_string(), "time".to_string()];
        for a in 0..k {
            cols.push(format!("slip_a_{a}"));
            cols.push(format!("slip_b_{a}"));
            cols.push(format!("jump_{a}"));
        }
        let mut j = Series { name: format!("jumps_{i:02}"), columns: cols, rows: Vec::new() };
        for jm in &p.jumps {
            let mut row: Vec<Value> = vec![jm.x.x.into(), jm.x.y.into(), p.t.into()];
            for a in 0..k {
                row.push(jm.slip_a[a].into());
                row.push(jm.slip_b[a].into());
                row.push(jm.jump(a).into());
            }
            j.push(row);
        }
        out.push(j);
    }

    // final nodal field snapshot
    if !res.final_d.is_empty() {
        let nd = mesh.dofs_per_node();
        let k = mesh.slip_count();
        let mut cols = vec!["node".to_string(), "x1".to_string(), "x2".to_string()];
        cols.push("u1".into());
        cols.push("u2".into());
        for a in 0..k {
            cols.push(format!("gamma_{a}"));
        }
        let mut s = Series { name: "fields".into(), columns: cols, rows: Vec::new() };
        for (n, x) in mesh.coords.iter().enumerate() {
            let mut row: Vec<Value> = vec![
                n.into(),
                x.x.into(),
                x.y.into(),
                res.final_d[n * nd].into(),
                res.final_d[n * nd + 1].into(),
            ];
            for a in 0..k {
                row.push(res.final_d[n * nd + 2 + a].into());
            }
            s.push(row);
        }
        out.push(s);
    }
    out
}

fn case_mesh(cfg: &CaseConfig) -> Result<MixedMesh> {
    match cfg.case {
        CaseKind::ShearLayer => cfg.build_shear_layer()?.mesh(),
        CaseKind::BicrystalShear => cfg.build_bicrystal_shear()?.mesh(),
        CaseKind::BicrystalTension => cfg.build_bicrystal_tension()?.mesh(),
    }
}

fn mesh_dump(cfg: &CaseConfig, out: &Path) -> Result<()> {
    let mesh = case_mesh(cfg)?;
    mesh.validate()?;
    let nd = mesh.dofs_per_node();
    println!("nodes:              {}", mesh.coords.len());
    println!("bulk elements:      {}", mesh.bulk.len());
    println!("interface elements: {}", mesh.interface.len());
    println!("grains:             {}", mesh.grains.len());
    println!("dofs per node:      {nd}");
    println!("total dofs:         {}", mesh.coords.len() * nd);

    let mut nodes = Series::new("nodes", &["node", "x1", "x2"]);
    for (n, x) in mesh.coords.iter().enumerate() {
        nodes.push(vec![n.into(), x.x.into(), x.y.into()]);
    }
    let mut elements = Series::new(
        "elements",
        &["element", "grain", "n0", "n1", "n2", "n3", "n4", "n5", "n6", "n7"],
    );
    for (e, el) in mesh.bulk.iter().enumerate() {
        let mut row: Vec<Value> = vec![e.into(), el.grain.into()];
        row.extend(el.nodes.iter().map(|&n| Value::from(n)));
        elements.push(row);
    }
    let mut interface = Series::new(
        "interface",
        &["element", "a0", "a1", "a2", "b0", "b1", "b2", "normal_x", "normal_y"],
    );
    for (e, el) in mesh.interface.iter().enumerate() {
        let mut row: Vec<Value> = vec![e.into()];
        row.extend(el.nodes_a.iter().map(|&n| Value::from(n)));
        row.extend(el.nodes_b.iter().map(|&n| Value::from(n)));
        row.push(el.orientation.normal.x.into());
        row.push(el.orientation.normal.y.into());
        interface.push(row);
    }
    for s in [&nodes, &elements, &interface] {
        let path = write_series(out, s)?;
        say(1, format!("wrote {}", path.display()));
    }
    Ok(())
}

/// Applies one sweepable parameter. The list is explicit so that a typo
/// fails loudly instead of silently running the base config.
fn set_param(cfg: &mut CaseConfig, key: &str, value: f64) -> Result<()> {
    match key {
        "material.l_star" => cfg.material.l_star = value,
        "material.zeta" => cfg.material.zeta = value,
        "material.l_en" => cfg.material.l_en = value,
        "material.l_d" => cfg.material.l_d = value,
        "material.h0" => cfg.material.h0 = value,
        "grain_boundary.c_s" => cfg.grain_boundary.c_s = value,
        "grain_boundary.zeta_s" => cfg.grain_boundary.zeta_s = value,
        _ => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {key}; supported: material.{{l_star, zeta, l_en, l_d, h0}}, grain_boundary.{{c_s, zeta_s}}"
            )))
        }
    }
    Ok(())
}

fn sweep(base: &CaseConfig, spec: &str, out: &Path) -> Result<()> {
    let start = Instant::now();
    let (key, list) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep spec {spec} is not param=v1,v2,...")))?;
    let values: Vec<f64> = list
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value {v} is not a number")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let short = key.rsplit('.').next().unwrap_or(key);

    let points: Vec<(usize, f64, CaseConfig, PathBuf)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| -> Result<_> {
            let mut cfg = base.clone();
            set_param(&mut cfg, key, v)?;
            cfg.validate()?;
            Ok((i, v, cfg, out.join(format!("{short}={v}"))))
        })
        .collect::<Result<_>>()?;

    let mut results: Vec<(usize, f64, Vec<Value>)> = points
        .par_iter()
        .map(|(i, v, cfg, dir)| -> Result<(usize, f64, Vec<Value>)> {
            let run_start = Instant::now();
            let series = execute(cfg)?;
            let mut files = Vec::new();
            for s in &series {
                write_series(dir, s)?;
                files.push(format!("{}.csv", s.name));
            }
            write_manifest(dir, cfg, run_start.elapsed().as_secs_f64(), &files)?;
            say(1, format!("{key} = {v} finished"));
            let last = summary_row(&series)?;
            Ok((*i, *v, last))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|(i, _, _)| *i);

    let mut summary = Series::new(
        "sweep_summary",
        &[
            "value",
            "time",
            "Gamma",
            "sigma_avg",
            "psi_defect_avg",
            "dissipation_avg",
            "dissipation_ho_avg",
            "gb_dissipation",
            "gb_energy",
        ],
    );
    for (_, v, row) in results {
        let mut full: Vec<Value> = vec![v.into()];
        full.extend(row);
        summary.push(full);
    }
    let path = write_series(out, &summary)?;
    write_manifest(out, base, start.elapsed().as_secs_f64(), &[format!("{}.csv", summary.name)])?;
    say(1, format!("sweep summary at {}", path.display()));
    Ok(())
}

/// Last-step summary (time, Gamma, stress, energies) from a case's series.
fn summary_row(series: &[Series]) -> Result<Vec<Value>> {
    let find = |name: &str| series.iter().find(|s| s.name == name);
    let ss = find("stress_strain")
        .and_then(|s| s.rows.last())
        .ok_or_else(|| Error::Solver("run produced no stress-strain rows".into()))?;
    // columns: step, time, Gamma, sigma
    let mut row = vec![ss[1], ss[2], ss[3]];

    let get = |name: &str, col: usize| -> Value {
        find(name).and_then(|s| s.rows.last()).map(|r| r[col]).unwrap_or(Value::Num(0.0))
    };
    if find("averages").is_some() {
        // shear layer: psi, diss, diss_ho; no boundary terms
        row.push(get("averages", 3));
        row.push(get("averages", 4));
        row.push(get("averages", 5));
        row.push(Value::Num(0.0));
        row.push(Value::Num(0.0));
    } else {
        // bicrystal cases: psi, diss, gb dissipation and energy
        row.push(get("grain_boundary", 3));
        row.push(get("grain_boundary", 4));
        row.push(Value::Num(0.0));
        row.push(get("grain_boundary", 5));
        row.push(get("grain_boundary", 6));
    }
    Ok(row)
}
