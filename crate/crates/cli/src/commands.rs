use std::fs;
use std::path::Path;

use fvk_core::el::{el_residuals, ElSystem};
use fvk_core::gamma::gamma_study;
use fvk_core::material::{embed, l_map, upper2};
use fvk_core::solver::{
    minimize, stationarity_report, strong_diagnostics, InitialGuess, SolveReport, StationaritySummary,
    StrongDiagnostics,
};
use fvk_core::{Displacement, LameMaterial};
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Map, Value};

use crate::config::{parse_config, ProblemConfig, ResidualConfig};
use crate::io::{write_displacement, write_fields};
use crate::{Cli, CliError, Command, CommonArgs};

pub const RESOLVED_CONFIG: &str = "config.resolved.ini";

/// Runs one command, honouring `--threads` with a dedicated pool.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| {
                CliError::Config(crate::ConfigErrors(vec![crate::ConfigError {
                    line: 0,
                    message: format!("--threads: {e}"),
                }]))
            })?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    match command {
        Command::Solve(a) => solve(&cfg, a),
        Command::Gamma(a) => gamma(&cfg, a),
        Command::Residual(a) => residual(&cfg, a),
        Command::MaterialTable(a) => material_table(&cfg, a),
        Command::Export(a) => export(&cfg, a),
    }
}

/// Reads and parses a configuration file. A relative `[residual] fields`
/// path is taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(ResidualConfig { fields }) = &mut cfg.residual {
        if fields.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            *fields = base.join(&*fields);
        }
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    write_text(path, &(text + "\n"))
}

fn echo_config(cfg: &ProblemConfig, out: &Path) -> Result<(), CliError> {
    write_text(&out.join(RESOLVED_CONFIG), &cfg.to_ini())
}

fn stationarity_json(s: &StationaritySummary, map: &mut Map<String, Value>) {
    map.insert("stationarity_max".into(), json!(s.max));
    map.insert("stationarity_max_r1".into(), json!(s.max_r1));
    map.insert("stationarity_max_r2".into(), json!(s.max_r2));
    map.insert("stationarity_samples".into(), json!(s.samples));
}

fn strong_json(s: &StrongDiagnostics, map: &mut Map<String, Value>) {
    map.insert("el_r1_l2".into(), json!(s.el_r1_l2));
    map.insert("el_r2_l2".into(), json!(s.el_r2_l2));
    map.insert("bdry_b1".into(), json!(s.boundary.b1));
    map.insert("bdry_b2".into(), json!(s.boundary.b2));
    map.insert("bdry_b3".into(), json!(s.boundary.b3));
    map.insert("airy_ls_residual".into(), json!(s.airy_ls_residual));
    map.insert("airy_cg_iterations".into(), json!(s.airy_cg_iterations));
}

fn solve(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(), CliError> {
    let p = cfg.problem()?;
    echo_config(cfg, &args.out)?;
    let report: SolveReport = minimize(&p, &cfg.solver, InitialGuess::Random)?;
    write_displacement(&args.out.join("fields.csv"), &report.displacement)?;

    let mut trace = String::from("iteration,energy,grad_norm\n");
    for (k, (e, g)) in report.energy_trace.iter().zip(&report.grad_norm_trace).enumerate() {
        trace.push_str(&format!("{k},{e:.16e},{g:.16e}\n"));
    }
    write_text(&args.out.join("trace.csv"), &trace)?;

    let mut map = Map::new();
    map.insert("final_energy".into(), json!(report.final_energy));
    map.insert("final_grad_norm".into(), json!(report.final_grad_norm));
    map.insert("iterations".into(), json!(report.iterations));
    map.insert("termination".into(), json!(report.termination));
    map.insert("seed".into(), json!(cfg.solver.seed));
    map.insert("n_tests".into(), json!(cfg.solver.n_tests));
    map.insert("zero_growth".into(), json!(cfg.zero_growth));
    stationarity_json(&report.stationarity, &mut map);
    strong_json(&report.strong, &mut map);
    write_json(&args.out.join("report.json"), &Value::Object(map))
}

fn gamma(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let d = cfg
        .displacement
        .as_ref()
        .ok_or_else(|| missing("displacement", "gamma"))?
        .build();
    echo_config(cfg, &args.out)?;
    let study = gamma_study(&p, &d, &cfg.gamma.h_list, cfg.gamma.quadrature)?;
    write_text(&args.out.join("gamma.csv"), &study.to_csv())?;
    write_json(
        &args.out.join("gamma.json"),
        &serde_json::to_value(&study).expect("study serializes"),
    )
}

fn residual_displacement(cfg: &ProblemConfig, grid: &fvk_core::Grid2D) -> Result<Displacement, CliError> {
    if let Some(r) = &cfg.residual {
        return crate::io::read_displacement(&r.fields, grid);
    }
    match &cfg.displacement {
        Some(d) => Ok(d.build().sample(grid)?),
        None => Err(missing("displacement] or [residual", "residual")),
    }
}

fn residual(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let d = residual_displacement(cfg, p.grid())?;
    echo_config(cfg, &args.out)?;
    let stationarity = stationarity_report(&p, &d, cfg.solver.n_tests, cfg.solver.seed)?;
    let strong = strong_diagnostics(&p, &d)?;
    let el = el_residuals(&p, &d, ElSystem::Consistent)?;
    write_fields(
        &args.out.join("residual_fields.csv"),
        p.grid(),
        &[
            ("r1", &el.r1.values),
            ("r2", &el.r2.values),
            ("phi", &el.airy.phi.values),
        ],
    )?;
    let mut map = Map::new();
    map.insert("energy".into(), json!(fvk_core::energy::energy_ig(&p, &d)?));
    map.insert("seed".into(), json!(cfg.solver.seed));
    map.insert("n_tests".into(), json!(cfg.solver.n_tests));
    stationarity_json(&stationarity, &mut map);
    strong_json(&strong, &mut map);
    write_json(&args.out.join("residual.json"), &Value::Object(map))
}

/// Sample matrices for the material table: `(name, F)` with `F` 3x3.
fn material_samples() -> Vec<(&'static str, Matrix3<f64>)> {
    vec![
        ("identity", Matrix3::identity()),
        ("uniaxial", Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 0.0))),
        ("shear", Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        ("skew", Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        ("transverse", Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 2.0)),
        ("generic", Matrix3::new(0.3, -1.2, 0.7, 0.4, 2.0, -0.5, 0.1, 0.9, -0.8)),
    ]
}

pub fn material_table_csv(m: &LameMaterial) -> Result<String, CliError> {
    let mut out = String::from("sample,f11,f12,f21,f22,q2,q2_minimized,q3_embedded,c1,c2,c3,q3,l1,l2,l3\n");
    for (name, f3) in material_samples() {
        let f = upper2(&f3);
        let (q2_min, _) = m.q2_minimized(&f)?;
        let c = m.c_map(&f);
        let l = l_map(&f3);
        out.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            f[(0, 0)],
            f[(0, 1)],
            f[(1, 0)],
            f[(1, 1)],
            m.q2(&f),
            q2_min,
            m.q3(&embed(&f)),
            c[0],
            c[1],
            c[2],
            m.q3(&f3),
            l[0],
            l[1],
            l[2],
        ));
    }
    Ok(out)
}

fn material_table(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(), CliError> {
    let m = cfg.require_material()?;
    echo_config(cfg, &args.out)?;
    let mut summary = format!(
        "# mu={} lambda={} young={} poisson={} bending={}\n",
        m.mu(),
        m.lambda(),
        m.young_modulus(),
        m.poisson_ratio(),
        m.bending_stiffness()
    );
    summary.push_str(&material_table_csv(&m)?);
    write_text(&args.out.join("material_table.csv"), &summary)
}

fn export(cfg: &ProblemConfig, args: &CommonArgs) -> Result<(), CliError> {
    let grid = cfg.require_grid()?;
    let t = cfg.require_thickness()?;
    t.validate(&grid)?;
    echo_config(cfg, &args.out)?;
    let mut names: Vec<String> = vec!["g1".into(), "g2".into()];
    let mut columns: Vec<Vec<f64>> = vec![grid.sample(&t.g1)?.values, grid.sample(&t.g2)?.values];
    for (prefix, m) in [("eps", &cfg.growth.eps), ("kappa", &cfg.growth.kappa)] {
        for (r, row) in m.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                names.push(format!("{prefix}_{}{}", r + 1, c + 1));
                columns.push(grid.sample(&e.expr)?.values);
            }
        }
    }
    if let Some(d) = &cfg.displacement {
        let d = d.build();
        for (name, e) in [("w1", &d.w[0]), ("w2", &d.w[1]), ("v", &d.v)] {
            names.push(name.into());
            columns.push(grid.sample(e)?.values);
        }
    }
    let cols: Vec<(&str, &[f64])> = names
        .iter()
        .map(String::as_str)
        .zip(columns.iter().map(Vec::as_slice))
        .collect();
    write_fields(&args.out.join("inputs.csv"), &grid, &cols)
}

fn missing(section: &str, command: &str) -> CliError {
    CliError::Config(crate::ConfigErrors(vec![crate::ConfigError {
        line: 0,
        message: format!("`{command}` needs a [{section}] section"),
    }]))
}
