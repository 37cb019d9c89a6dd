//! Command execution. Every command produces its CSV bodies in memory; the
//! caller decides where they go.

use std::fmt::Write as _;
use std::sync::Arc;

use hlab_core::cat0::{TargetPoint, TargetSpace};
use hlab_core::cc_metric::{
    ball_moments, ball_volume, ball_volume_monte_carlo, cc_distance, mcp_check, solve_endpoint,
};
use hlab_core::heisenberg::{relative, Generator, GroupPoint};
use hlab_core::lab::{
    lemma53_experiment, lemma53_pair, lipschitz_profile, moser_refinement, pansu_l2_convergence, Field,
    LipschitzOptions,
};
use hlab_core::sampling;
use hlab_core::solver::{
    admissible_mask, random_bumps, solve_dirichlet, subsolution_residual, GridMap, InitialGuess, Lattice, Side,
    Solution, SolverConfig,
};
use serde_json::{json, Value};

use crate::config::{Boundary, Command, ExperimentConfig};
use crate::CliError;

/// One CSV body; `suffix` distinguishes secondary tables of a command.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub suffix: Option<String>,
    pub body: String,
}

#[derive(Clone, Debug)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub results: Value,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// Formats a float with 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn csv_body(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

fn point(coords: &[f64]) -> Result<GroupPoint, CliError> {
    GroupPoint::from_slice(coords).map_err(CliError::from)
}

fn coord_names(prefix: &str, n: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=n).map(|i| format!("{prefix}x{i}")).collect();
    v.extend((1..=n).map(|i| format!("{prefix}y{i}")));
    v.push(format!("{prefix}t"));
    v
}

pub fn pansu_field(name: &str) -> Result<Field, CliError> {
    match name {
        "x1" => Ok(Field::coordinate(0)),
        "x1sq" => Ok(Field::with_gradient(|p| p.x()[0].powi(2), |p| {
            let mut g = vec![0.0; p.coords().len()];
            g[0] = 2.0 * p.x()[0];
            g
        })),
        "t" => Ok(Field::with_gradient(
            |p| p.t(),
            |p| {
                let mut g = vec![0.0; p.coords().len()];
                g[p.coords().len() - 1] = 1.0;
                g
            },
        )),
        "mixed" => Ok(lemma53_pair("mixed")?.1),
        other => Err(CliError::Validation(format!(
            "numerics.field: unknown field {other:?}; expected x1, x1sq, t or mixed"
        ))),
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.validate()?;
    match cfg.command {
        Command::Dist => dist(cfg),
        Command::Volume => volume(cfg),
        Command::Moments => moments(cfg),
        Command::Mcp => mcp(cfg),
        Command::Solve => solve(cfg),
        Command::Subsolution => subsolution(cfg),
        Command::Moser => moser(cfg),
        Command::Lipschitz => lipschitz(cfg),
        Command::Lemma53 => lemma53(cfg),
        Command::Pansu => pansu(cfg),
    }
}

fn dist(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let pts = cfg.numerics.points.as_ref().expect("validated");
    let (p, q) = (point(&pts[0])?, point(&pts[1])?);
    let n = p.n();
    let d = cc_distance(&p, &q);
    let params = if d > 0.0 { Some(solve_endpoint(&relative(&p, &q))?) } else { None };
    let mut header = coord_names("p_", n);
    header.extend(coord_names("q_", n));
    header.extend(["distance", "psi", "rho0"].map(String::from));
    header.extend((1..=2 * n).map(|i| format!("dir{i}")));
    let mut row: Vec<String> = p.coords().iter().chain(q.coords()).map(|v| fmt(*v)).collect();
    row.push(fmt(d));
    match &params {
        Some(g) => {
            row.push(fmt(g.psi()));
            row.push(fmt(g.rho0()));
            row.extend(g.dir().iter().map(|v| fmt(*v)));
        }
        None => row.extend(std::iter::repeat_n(String::new(), 2 + 2 * n)),
    }
    let summary = match &params {
        Some(g) => format!("d_cc = {d:.12}\npsi = {:.12}\nrho0 = {:.12}\ndir = {:?}\n", g.psi(), g.rho0(), g.dir()),
        None => "d_cc = 0 (coincident points)\n".into(),
    };
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &[row]),
        }],
        results: json!({
            "distance": d,
            "psi": params.as_ref().map(|g| g.psi()),
            "rho0": params.as_ref().map(|g| g.rho0()),
            "dir": params.as_ref().map(|g| g.dir().to_vec()),
        }),
        summary,
    })
}

fn volume(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let n = cfg.geometry.n;
    let mc = ball_volume_monte_carlo(n, nm.radius, nm.samples, nm.seed)?;
    let exact = ball_volume(n, nm.radius)?;
    let rel = mc.mean / exact - 1.0;
    let header = ["radius", "monte_carlo", "standard_error", "attempts", "quadrature", "relative_error"].map(String::from);
    let row = vec![fmt(nm.radius), fmt(mc.mean), fmt(mc.standard_error), mc.count.to_string(), fmt(exact), fmt(rel)];
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &[row]),
        }],
        results: json!({ "monte_carlo": mc, "quadrature": exact, "relative_error": rel }),
        summary: format!("mu(B_{}) = {:.8} ± {:.2e} (quadrature {:.10})\n", nm.radius, mc.mean, mc.standard_error, exact),
    })
}

fn moments(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let m = ball_moments(cfg.geometry.n, nm.radius, nm.samples, nm.seed)?;
    let dim = 2 * cfg.geometry.n + 1;
    let header = ["i", "j", "moment", "standard_error"].map(String::from);
    let mut rows = Vec::new();
    let mut worst_off = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            rows.push(vec![i.to_string(), j.to_string(), fmt(m.get(i, j)), fmt(m.se(i, j))]);
            if i != j && i < m.horizontal() && j < m.horizontal() && m.se(i, j) > 0.0 {
                worst_off = worst_off.max(m.get(i, j).abs() / m.se(i, j));
            }
        }
    }
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        results: json!({
            "volume": m.volume,
            "normalized_second_moment": m.normalized_horizontal(),
            "max_off_diagonal_z": worst_off,
        }),
        summary: format!(
            "normalized second moment {:.8}; largest off-diagonal |z| {:.3}\n",
            m.normalized_horizontal(),
            worst_off
        ),
    })
}

fn mcp(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let x = match &nm.points {
        Some(p) => point(&p[0])?,
        None => GroupPoint::identity(cfg.geometry.n),
    };
    let r = mcp_check(&x, nm.radius, nm.tau, nm.samples, nm.seed)?;
    let header = ["tau", "radius", "samples", "theta", "mean_ratio"].map(String::from);
    let row = vec![fmt(r.tau), fmt(r.radius), r.samples.to_string(), fmt(r.theta), fmt(r.mean_ratio)];
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &[row]),
        }],
        results: serde_json::to_value(&r).expect("serializable"),
        summary: format!("theta = {:.6} at tau = {}\n", r.theta, r.tau),
    })
}

/// Builds the lattice and boundary map of a lattice command at spacing `h`.
pub fn boundary_map(cfg: &ExperimentConfig, h: f64) -> Result<GridMap, CliError> {
    let lattice = Arc::new(Lattice::new(cfg.bounds()?, h)?);
    match cfg.boundary.as_ref().expect("validated") {
        Boundary::Preset(p) => Ok(p.boundary(lattice)?),
        Boundary::Table(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            crate::gridmap::read_gridmap(&text, lattice, cfg.target_space()?)
        }
    }
}

fn solver_config(cfg: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        tol: cfg.numerics.tol,
        max_sweeps: cfg.numerics.max_sweeps,
        seed: cfg.numerics.seed,
        init: InitialGuess::BoundaryMean,
    }
}

fn solved(cfg: &ExperimentConfig, h: f64) -> Result<Solution, CliError> {
    Ok(solve_dirichlet(&boundary_map(cfg, h)?, &solver_config(cfg))?)
}

fn solve_results(s: &Solution) -> Value {
    json!({
        "nodes": s.map.lattice().len(),
        "interior": s.map.lattice().interior().len(),
        "sweeps": s.sweeps,
        "final_movement": s.final_movement,
        "tol": s.tol,
        "energy": s.energy_trace.last(),
    })
}

fn solve(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let s = solved(cfg, cfg.geometry.h)?;
    let energy_rows: Vec<Vec<String>> = s
        .energy_trace
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), fmt(*e)])
        .collect();
    Ok(Artifacts {
        tables: vec![
            Table {
                suffix: None,
                body: crate::gridmap::write_gridmap(&s.map),
            },
            Table {
                suffix: Some("energy".into()),
                body: csv_body(&["sweep".into(), "energy".into()], &energy_rows),
            },
        ],
        summary: format!(
            "converged after {} sweeps (movement {:.2e} < {:.2e}); energy {:.10}\n",
            s.sweeps,
            s.final_movement,
            s.tol,
            s.energy_trace.last().copied().unwrap_or(0.0)
        ),
        results: solve_results(&s),
    })
}

fn subsolution(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let s = solved(cfg, cfg.geometry.h)?;
    let lat = Arc::clone(s.map.lattice());
    let header = ["generator", "steps", "eta", "pairing", "scale", "ratio"].map(String::from);
    let mut rows = Vec::new();
    let (mut worst_ratio, mut worst_pair) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut k = 0u64;
    for g in Generator::all(lat.n()) {
        for steps in [1i64, -1] {
            let mask = admissible_mask(&lat, g, steps, Side::Left);
            let etas = random_bumps(&lat, &mask, nm.etas, (nm.eta_radius[0], nm.eta_radius[1]), sampling::derive_seed(nm.seed, k))?;
            k += 1;
            let r = subsolution_residual(&s.map, g, steps, Side::Left, &etas)?;
            for (e, (p, sc)) in r.pairings.iter().zip(&r.scales).enumerate() {
                let ratio = if *sc > 0.0 { p / sc } else { 0.0 };
                rows.push(vec![g.index().to_string(), steps.to_string(), e.to_string(), fmt(*p), fmt(*sc), fmt(ratio)]);
            }
            worst_ratio = worst_ratio.max(r.max_ratio);
            worst_pair = worst_pair.max(r.max_pairing);
        }
    }
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        results: json!({ "solve": solve_results(&s), "max_pairing": worst_pair, "max_ratio": worst_ratio }),
        summary: format!("largest pairing {worst_pair:.3e}; largest pairing/scale {worst_ratio:.3e}\n"),
    })
}

fn moser(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let h = cfg.geometry.h;
    let mut hs = vec![h];
    if nm.refine {
        hs.push(h / 2.0);
    }
    let maps = hs.iter().map(|&h| Ok(solved(cfg, h)?.map)).collect::<Result<Vec<_>, CliError>>()?;
    let refs: Vec<&GridMap> = maps.iter().collect();
    let m = moser_refinement(&refs, nm.center_spacing, &nm.radii)?;
    let n = cfg.geometry.n;
    let mut header = vec!["h".to_string()];
    header.extend(coord_names("c_", n));
    header.extend(["radius", "value", "ball_average", "nodes", "ratio"].map(String::from));
    let mut rows = Vec::new();
    for (h, t) in hs.iter().zip(&m.tables) {
        for r in &t.rows {
            let mut row = vec![fmt(*h)];
            row.extend(r.center.iter().map(|v| fmt(*v)));
            row.extend([fmt(r.radius), fmt(r.value), fmt(r.ball_average), r.nodes.to_string(), fmt(r.ratio)]);
            rows.push(row);
        }
    }
    let change = (m.constants.len() == 2).then(|| m.constants[1] / m.constants[0] - 1.0);
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        results: json!({
            "h": hs,
            "constants": m.constants,
            "centers_per_radius": m.centers_per_radius,
            "relative_change": change,
        }),
        summary: format!("mean-value constants {:?} for h = {:?}\n", m.constants, hs),
    })
}

fn lipschitz(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let s = solved(cfg, cfg.geometry.h)?;
    let opts = LipschitzOptions {
        collar: nm.collar,
        max_bases: nm.max_bases,
        max_offsets: nm.max_offsets,
        seed: nm.seed,
    };
    let mut report = lipschitz_profile(&s.map, nm.scales.as_ref().expect("validated"), &opts)?;
    if !nm.radii.is_empty() {
        let m = moser_refinement(&[&s.map], nm.center_spacing, &nm.radii)?;
        report = report.with_moser(&m.tables[0])?;
    }
    let header = ["scale", "sup_quotient", "pairs"].map(String::from);
    let rows: Vec<Vec<String>> = report
        .scales
        .iter()
        .map(|q| vec![fmt(q.scale), fmt(q.sup_quotient), q.pairs.to_string()])
        .collect();
    let mut summary = String::new();
    for q in &report.scales {
        let _ = writeln!(summary, "sigma = {:<8} sup quotient {:.6} over {} pairs", q.scale, q.sup_quotient, q.pairs);
    }
    let _ = writeln!(summary, "Hölder exponent fit: {:?}", report.holder_exponent);
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        results: json!({ "solve": solve_results(&s), "report": report }),
        summary,
    })
}

fn lemma53(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let (eta, f) = lemma53_pair(&nm.pair)?;
    let p = match &nm.points {
        Some(p) => point(&p[0])?,
        None => GroupPoint::identity(cfg.geometry.n),
    };
    let t = lemma53_experiment(&eta, &f, &p, nm.ladder.as_ref().expect("validated"), nm.samples, nm.seed)?;
    let header = ["epsilon", "raw_mean", "lhs", "lhs_se", "rhs", "limit_mc", "error", "moment_error"].map(String::from);
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            [r.epsilon, r.raw_mean, r.lhs, r.lhs_se, r.rhs, r.limit_mc, r.error, r.moment_error]
                .iter()
                .map(|v| fmt(*v))
                .collect()
        })
        .collect();
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        summary: format!("pair {}: mean halving ratio {:?}\n", nm.pair, t.mean_halving_ratio),
        results: serde_json::to_value(&t).expect("serializable"),
    })
}

fn pansu(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let nm = &cfg.numerics;
    let f = pansu_field(&nm.field)?;
    let t = pansu_l2_convergence(&f, cfg.geometry.n, nm.ladder.as_ref().expect("validated"), nm.samples, nm.seed)?;
    let header = ["epsilon", "mean_sq_error", "standard_error"].map(String::from);
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| vec![fmt(r.epsilon), fmt(r.error.mean), fmt(r.error.standard_error)])
        .collect();
    Ok(Artifacts {
        tables: vec![Table {
            suffix: None,
            body: csv_body(&header, &rows),
        }],
        summary: format!("field {}: mean halving ratio {:?}\n", nm.field, t.mean_halving_ratio),
        results: serde_json::to_value(&t).expect("serializable"),
    })
}

/// The target point encoded in a grid-map row.
pub(crate) fn encode_point(space: TargetSpace, v: &TargetPoint) -> Vec<String> {
    match (space, v) {
        (TargetSpace::Euclidean { .. }, TargetPoint::Euclidean(c)) => c.iter().map(|x| fmt(*x)).collect(),
        (TargetSpace::Spider { .. }, TargetPoint::Spider { leg, radius }) => vec![leg.to_string(), fmt(*radius)],
        _ => unreachable!("grid maps hold points of their own space"),
    }
}
