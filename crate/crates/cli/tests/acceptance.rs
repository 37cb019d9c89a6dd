//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p hlab-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use hlab_core::cat0::{quad_comparison_check, TargetPoint, TargetSpace};
use hlab_core::cc_metric::{
    ball_moments, cc_distance, cc_norm, geodesic_point, geodesic_velocity, horizontality_residual, jacobian_det,
    jacobian_det_fd, solve_endpoint, GeodesicParams,
};
use hlab_core::domain::DomainBox;
use hlab_core::energy::{interpolation_inequality_check, SmoothMap};
use hlab_core::heisenberg::{dilate, dilated_box_volume, inverse, multiply, Generator, GroupPoint};
use hlab_core::lab::{
    lattice_geodesic_norms, lemma53_experiment, lemma53_pair, lipschitz_profile, moser_refinement, unit_box,
    BoundaryPreset, LipschitzOptions,
};
use hlab_core::sampling::{self, derive_seed, geometric_ladder, Stream};
use hlab_core::solver::{
    admissible_mask, random_bumps, solve_dirichlet, subsolution_residual, GridMap, Lattice, Side, Solution,
    SolverConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform_point(rng: &mut Stream, half: f64) -> GroupPoint {
    GroupPoint::h1(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

fn solve_preset(preset: BoundaryPreset, h: f64, tol: Option<f64>) -> Solution {
    let lat = Arc::new(Lattice::new(unit_box(), h).expect("lattice"));
    let b = preset.boundary(lat).expect("boundary");
    solve_dirichlet(&b, &SolverConfig { tol, ..Default::default() }).expect("converged")
}

fn c1_group() -> Outcome {
    let mut rng = sampling::stream(101);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (p, q, r) = (uniform_point(&mut rng, 1.0), uniform_point(&mut rng, 1.0), uniform_point(&mut rng, 1.0));
        let a: f64 = rng.random_range(0.1..3.0);
        let b: f64 = rng.random_range(0.1..3.0);
        let e = GroupPoint::identity(1);
        let assoc = multiply(&multiply(&p, &q), &r).max_abs_diff(&multiply(&p, &multiply(&q, &r)));
        let unit = multiply(&p, &e).max_abs_diff(&p).max(multiply(&e, &p).max_abs_diff(&p));
        let inv = multiply(&p, &inverse(&p))
            .max_abs_diff(&e)
            .max(multiply(&inverse(&p), &p).max_abs_diff(&e));
        let hom = dilate(a, &multiply(&p, &q))
            .unwrap()
            .max_abs_diff(&multiply(&dilate(a, &p).unwrap(), &dilate(a, &q).unwrap()));
        let comp = dilate(a, &dilate(b, &p).unwrap()).unwrap().max_abs_diff(&dilate(a * b, &p).unwrap());
        worst = worst.max(assoc).max(unit).max(inv).max(hom).max(comp);
    }
    let eps = 0.5;
    let shift = GroupPoint::h1(0.3, -0.2, 0.1);
    let (lo, hi) = ([-0.5, -0.25, 0.0], [0.5, 0.75, 0.4]);
    let v = dilated_box_volume(eps, &shift, &lo, &hi, 1_000_000, 102).map_err(|e| e.to_string())?;
    let exact = eps.powi(4) * 0.4;
    let rel = (v.mean / exact - 1.0).abs();
    check(
        worst <= 1e-13 && rel <= 0.01,
        format!("max axiom defect {worst:.2e} (tol 1e-13); dilated volume rel. error {rel:.2e} (tol 1e-2)"),
    )
}

fn c2_geodesics() -> Outcome {
    let mut rng = sampling::stream(201);
    let mut round_trip = 0.0f64;
    let (mut arc, mut horiz) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let w = uniform_point(&mut rng, 1.0);
        let g = solve_endpoint(&w).map_err(|e| e.to_string())?;
        round_trip = round_trip.max(geodesic_point(&g, 1.0).max_abs_diff(&w));
        for j in 0..=8 {
            horiz = horiz.max(horizontality_residual(&g, j as f64 / 8.0).abs());
        }
        if k % 10 == 0 {
            // Polyline of the horizontal projection.
            let m = 4000;
            let mut len = 0.0;
            let mut prev = geodesic_point(&g, 0.0);
            for j in 1..=m {
                let cur = geodesic_point(&g, j as f64 / m as f64);
                len += (cur.x()[0] - prev.x()[0]).hypot(cur.y()[0] - prev.y()[0]);
                prev = cur;
            }
            arc = arc.max((len - g.rho0()).abs());
            let speed = geodesic_velocity(&g, 0.5);
            arc = arc.max((speed[0].hypot(speed[1]) - g.rho0()).abs());
        }
    }
    let mut jac = 0.0f64;
    for _ in 0..100 {
        let psi = rng.random_range(-6.0..6.0);
        let rho0 = rng.random_range(0.2..1.5);
        let g = GeodesicParams::random_direction(&mut rng, 1, psi, rho0).map_err(|e| e.to_string())?;
        let a = jacobian_det(&g);
        let b = jacobian_det_fd(&g, 1e-5);
        jac = jac.max((a - b).abs() / a.abs());
    }
    check(
        round_trip <= 1e-8 && arc <= 1e-6 && horiz <= 1e-9 && jac <= 1e-4,
        format!(
            "round trip {round_trip:.2e} (1e-8); arc length {arc:.2e} (1e-6); horizontality {horiz:.2e} (1e-9); \
             Jacobian rel. {jac:.2e} (1e-4)"
        ),
    )
}

fn c3_distance() -> Outcome {
    let mut rng = sampling::stream(301);
    let (mut inv, mut hom, mut tri) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..10_000 {
        let (p, q, w) = (uniform_point(&mut rng, 1.0), uniform_point(&mut rng, 1.0), uniform_point(&mut rng, 1.0));
        let d = cc_distance(&p, &q);
        inv = inv.max((cc_distance(&multiply(&w, &p), &multiply(&w, &q)) - d).abs());
        let eps: f64 = rng.random_range(0.1..3.0);
        let de = cc_distance(&dilate(eps, &p).unwrap(), &dilate(eps, &q).unwrap());
        hom = hom.max((de - eps * d).abs());
        tri = tri.min(cc_distance(&p, &w) + cc_distance(&w, &q) - d);
    }
    let h = 0.02;
    let bounds = DomainBox::new(vec![-0.5, -0.5, -0.05], vec![0.5, 0.5, 0.05]).map_err(|e| e.to_string())?;
    // Norms of at least 15 lattice steps; the box contains their geodesics.
    let mut targets = Vec::new();
    let mut rng = sampling::stream(7);
    while targets.len() < 50 {
        let a = rng.random_range(-25i64..=25) as f64;
        let b = rng.random_range(-25i64..=25) as f64;
        let c = rng.random_range(-500i64..=500) as f64;
        let p = GroupPoint::h1(h * a, h * b, 0.5 * h * h * c);
        let d = cc_norm(&p);
        if d > 0.3 && d < 0.5 {
            targets.push(p);
        }
    }
    let lattice = lattice_geodesic_norms(&bounds, h, 3, &targets).map_err(|e| e.to_string())?;
    let worst = targets
        .iter()
        .zip(&lattice)
        .map(|(p, l)| (l / cc_norm(p) - 1.0).abs())
        .fold(0.0f64, f64::max);
    check(
        inv <= 1e-9 && hom <= 1e-9 && tri >= -1e-9 && worst <= 0.05,
        format!(
            "left invariance {inv:.2e} (1e-9); homogeneity {hom:.2e} (1e-9); triangle slack {tri:.2e} (>= -1e-9); \
             shortest-path rel. gap {worst:.3} (0.05)"
        ),
    )
}

fn c4_moments() -> Outcome {
    let m = ball_moments(1, 1.0, 1_000_000, 401).map_err(|e| e.to_string())?;
    let off = m.get(0, 1).abs() / m.se(0, 1);
    let diag = (m.get(0, 0) - m.get(1, 1)).abs() / m.diff_se(0, 1);
    check(
        off <= 3.0 && diag <= 3.0,
        format!("off-diagonal |m01|/SE {off:.2}; |m00 - m11|/SE {diag:.2} (both <= 3)"),
    )
}

fn c5_lemma53() -> Outcome {
    let p = GroupPoint::h1(0.3, -0.2, 0.1);
    let ladder = geometric_ladder(0.2, 0.5, 5);
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["x1-x1", "x1-y1", "mixed"] {
        let (eta, f) = lemma53_pair(name).map_err(|e| e.to_string())?;
        let t = lemma53_experiment(&eta, &f, &p, &ladder, 200_000, 501).map_err(|e| e.to_string())?;
        // `None` means every rung already sits at the floating-point floor.
        let ratio_ok = t.mean_halving_ratio.is_none_or(|r| r <= 0.7);
        ok &= ratio_ok;
        parts.push(format!("{name} ratio {:?}", t.mean_halving_ratio.map(|r| (r * 1e3).round() / 1e3)));
        if name == "x1-y1" {
            let last = t.rows.last().expect("rows");
            let z = (last.lhs - last.rhs).abs() / last.lhs_se;
            ok &= z <= 3.0;
            parts.push(format!("x1-y1 bottom rung |lhs-rhs|/SE {z:.2}"));
        }
    }
    check(ok, parts.join("; "))
}

fn c6_comparison() -> Outcome {
    let spider = TargetSpace::spider(3).unwrap();
    let plane = TargetSpace::euclidean(2).unwrap();
    let mut rng = sampling::stream(601);
    let mut worst = f64::INFINITY;
    let mut count = 0usize;
    for space in [spider, plane] {
        for _ in 0..50_000 {
            let mut pt = || match space {
                TargetSpace::Spider { .. } => {
                    TargetPoint::spider(rng.random_range(1..=3), rng.random_range(0.0..2.0)).unwrap()
                }
                TargetSpace::Euclidean { .. } => {
                    TargetPoint::euclidean(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                }
            };
            let (p, q, r, s) = (pt(), pt(), pt(), pt());
            let res = quad_comparison_check(&space, &p, &q, &r, &s, rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0))
                .map_err(|e| e.to_string())?;
            worst = worst.min(res.slack41).min(res.slack42);
            count += 1;
        }
    }
    let dom = unit_box();
    let tripod = SmoothMap::new(spider, dom.clone(), |p| BoundaryPreset::Tripod.value(p));
    let twisted = SmoothMap::new(spider, dom.clone(), |p| {
        let q = GroupPoint::h1(p.y()[0] - 0.1, 0.3 * p.x()[0], 2.0 * p.t());
        BoundaryPreset::Tripod.value(&q)
    });
    let flat0 = SmoothMap::new(plane, dom.clone(), |p| TargetPoint::euclidean(&[p.x()[0].sin(), p.y()[0] * p.t()]));
    let flat1 = SmoothMap::new(plane, dom, |p| TargetPoint::euclidean(&[p.x()[0] * p.y()[0], (3.0 * p.t()).cos()]));
    let eta = |p: &GroupPoint| 0.2 + 0.2 * (p.x()[0] + p.y()[0] * p.t()).sin();
    let mut map_worst = f64::INFINITY;
    for (k, (u0, u1)) in [(&tripod, &twisted), (&flat0, &flat1)].into_iter().enumerate() {
        let r = interpolation_inequality_check(u0, u1, &eta, 0.1, 50_000, 602 + k as u64).map_err(|e| e.to_string())?;
        map_worst = map_worst.min(r.min_slack_combined);
        count += r.pairs;
    }
    check(
        worst >= -1e-10 && map_worst >= -1e-10,
        format!("{count} instances; quadrilateral min slack {worst:.2e}; map-level min slack {map_worst:.2e} (>= -1e-10)"),
    )
}

fn c7_solver() -> Outcome {
    let lat = Arc::new(Lattice::new(unit_box(), 0.125).unwrap());
    let tight = SolverConfig { tol: Some(1e-14), ..Default::default() };
    let mut exact_err = 0.0f64;
    for f in [|p: &GroupPoint| p.x()[0], |p: &GroupPoint| p.t()] {
        let exact = GridMap::from_real(Arc::clone(&lat), f).unwrap();
        let sol = solve_dirichlet(&exact, &tight).map_err(|e| e.to_string())?;
        for i in 0..lat.len() {
            exact_err = exact_err.max((sol.map.real(i).unwrap() - exact.real(i).unwrap()).abs());
        }
    }
    let scalar = solve_preset(BoundaryPreset::Scalar, 0.0625, Some(1e-13));
    let leg = solve_preset(BoundaryPreset::SingleLeg, 0.0625, Some(1e-13));
    let mut leg_err = 0.0f64;
    for i in 0..scalar.map.lattice().len() {
        match leg.map.get(i) {
            TargetPoint::Spider { leg: 1, radius } => {
                leg_err = leg_err.max((radius - scalar.map.real(i).unwrap()).abs());
            }
            other => return Err(format!("single-leg solution left leg 1 at node {i}: {other:?}")),
        }
    }
    let tripod = solve_preset(BoundaryPreset::Tripod, 0.0625, None);
    let mut monotone = true;
    for tr in [&tripod.energy_trace, &scalar.energy_trace, &leg.energy_trace] {
        monotone &= tr.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    }
    let dense_err = dense_comparison()?;
    check(
        exact_err <= 1e-12 && leg_err <= 1e-10 && monotone && dense_err <= 1e-10,
        format!(
            "exact data {exact_err:.2e} (1e-12); single leg vs scalar {leg_err:.2e} (1e-10); monotone traces {monotone}; \
             dense solve {dense_err:.2e} (1e-10)"
        ),
    )
}

/// 5×5×5 nodes: the linear system of the averaging stencil, solved directly.
fn dense_comparison() -> Result<f64, String> {
    let bounds = DomainBox::new(vec![-0.5, -0.5, -0.0625], vec![0.5, 0.5, 0.0625]).unwrap();
    let lat = Arc::new(Lattice::new(bounds, 0.25).map_err(|e| e.to_string())?);
    if lat.dims() != [5, 5, 5] {
        return Err(format!("expected 5x5x5 nodes, got {:?}", lat.dims()));
    }
    let b = BoundaryPreset::Scalar.boundary(Arc::clone(&lat)).unwrap();
    let interior = lat.interior();
    let slot: BTreeMap<usize, usize> = interior.iter().enumerate().map(|(k, &i)| (i as usize, k)).collect();
    let m = interior.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (k, &i) in interior.iter().enumerate() {
        let i = i as usize;
        a[(k, k)] = 4.0;
        for g in Generator::all(1) {
            for forward in [true, false] {
                let j = lat.neighbor(i, g, forward).expect("interior node has all neighbors");
                match slot.get(&j) {
                    Some(&kj) => a[(k, kj)] -= 1.0,
                    None => rhs[k] += b.real(j).unwrap(),
                }
            }
        }
    }
    let x = a.lu().solve(&rhs).ok_or("singular stencil matrix")?;
    let sol = solve_dirichlet(&b, &SolverConfig { tol: Some(1e-14), ..Default::default() }).map_err(|e| e.to_string())?;
    Ok(interior
        .iter()
        .enumerate()
        .map(|(k, &i)| (sol.map.real(i as usize).unwrap() - x[k]).abs())
        .fold(0.0, f64::max))
}

fn c8_subsolution() -> Outcome {
    let s = solve_preset(BoundaryPreset::Tripod, 0.0625, None);
    let lat = Arc::clone(s.map.lattice());
    let mut worst = f64::NEG_INFINITY;
    let mut tested = 0usize;
    let mut k = 0u64;
    for g in Generator::all(1) {
        for steps in [1i64, -1] {
            let mask = admissible_mask(&lat, g, steps, Side::Left);
            let etas = random_bumps(&lat, &mask, 20, (0.1, 0.3), derive_seed(11, k)).map_err(|e| e.to_string())?;
            k += 1;
            let r = subsolution_residual(&s.map, g, steps, Side::Left, &etas).map_err(|e| e.to_string())?;
            worst = worst.max(r.max_ratio);
            tested += r.pairings.len();
        }
    }
    check(
        worst <= 1e-8 && tested == 80,
        format!("{tested} pairings; max pairing / energy scale {worst:.3e} (<= 1e-8)"),
    )
}

fn c9_moser() -> Outcome {
    let coarse = solve_preset(BoundaryPreset::Tripod, 0.125, None);
    let fine = solve_preset(BoundaryPreset::Tripod, 0.0625, None);
    let m = moser_refinement(&[&coarse.map, &fine.map], 0.125, &[0.25, 0.125]).map_err(|e| e.to_string())?;
    let (c0, c1) = (m.constants[0], m.constants[1]);
    let change = (c1 / c0 - 1.0).abs();
    check(
        c0.is_finite() && c1.is_finite() && change <= 0.25,
        format!("C(h=1/8) = {c0:.4}, C(h=1/16) = {c1:.4}; relative change {change:.3} (<= 0.25)"),
    )
}

fn c10_lipschitz() -> Outcome {
    let opts = LipschitzOptions { seed: 13, ..Default::default() };
    let tripod = solve_preset(BoundaryPreset::Tripod, 1.0 / 32.0, None);
    let r = lipschitz_profile(&tripod.map, &[0.25, 0.125, 0.0625], &opts).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = r.scales.windows(2).map(|w| w[1].sup_quotient / w[0].sup_quotient).collect();
    let mut ok = ratios.iter().all(|q| *q <= 1.1);
    let mut parts = vec![format!("tripod quotient ratios {ratios:.3?} (<= 1.1)")];
    let scales = geometric_ladder(0.5, 0.5f64.sqrt(), 5);
    for preset in [BoundaryPreset::CoordinateX, BoundaryPreset::Linear] {
        let s = solve_preset(preset, 0.0625, None);
        let r = lipschitz_profile(&s.map, &scales, &opts).map_err(|e| e.to_string())?;
        let e = r.holder_exponent.ok_or("no Hölder fit for a control")?;
        ok &= (e - 1.0).abs() <= 0.05;
        parts.push(format!("{preset:?} exponent {e:.4} (1 ± 0.05)"));
    }
    check(ok, parts.join("; "))
}

const LIGHT_CONFIGS: &[(&str, &str)] = &[
    ("dist", "command = \"dist\"\n[numerics]\npoints = [[0.1, 0.2, -0.3], [0.4, -0.1, 0.2]]\n"),
    ("volume", "command = \"volume\"\n[numerics]\nsamples = 20000\nseed = 3\n"),
    ("moments", "command = \"moments\"\n[numerics]\nsamples = 20000\nseed = 4\n"),
    ("mcp", "command = \"mcp\"\n[numerics]\nsamples = 500\nseed = 5\n"),
    ("lemma53", "command = \"lemma53\"\n[numerics]\nsamples = 5000\nladder = [0.2, 0.1, 0.05]\nseed = 6\n"),
    ("pansu", "command = \"pansu\"\n[numerics]\nsamples = 2000\nladder = [0.2, 0.1]\nseed = 7\n"),
    ("solve", "command = \"solve\"\nboundary = { preset = \"tripod\" }\n[geometry]\nh = 0.125\n"),
    (
        "subsolution",
        "command = \"subsolution\"\nboundary = { preset = \"tripod\" }\n[geometry]\nh = 0.125\n[numerics]\netas = 5\nseed = 8\n",
    ),
    (
        "moser",
        "command = \"moser\"\nboundary = { preset = \"tripod\" }\n[geometry]\nh = 0.125\n[numerics]\nrefine = false\n",
    ),
    (
        "lipschitz",
        "command = \"lipschitz\"\nboundary = { preset = \"tripod\" }\n[geometry]\nh = 0.125\n[numerics]\nscales = [0.5, 0.25]\nseed = 9\n",
    ),
];

/// CSV bodies keyed by file name with the timestamp removed.
fn run_cli(config: &Path, out: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hlab"))
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("{} exited with {status}", config.display()));
    }
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let mut parts: Vec<&str> = name.split('-').collect();
            parts.remove(1);
            files.insert(parts.join("-"), std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    let mut compared = 0usize;
    for (name, text) in LIGHT_CONFIGS {
        let cfg = dir.path().join(format!("{name}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let a = run_cli(&cfg, &dir.path().join(format!("{name}-a")))?;
        let b = run_cli(&cfg, &dir.path().join(format!("{name}-b")))?;
        if a.is_empty() || a != b {
            differing.push(*name);
        }
        compared += a.len();
    }
    check(
        differing.is_empty(),
        format!("{compared} CSV files over {} commands; differing: {differing:?}", LIGHT_CONFIGS.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("group and dilation", c1_group),
        ("geodesics", c2_geodesics),
        ("distance", c3_distance),
        ("ball moments", c4_moments),
        ("averaged product formula", c5_lemma53),
        ("CAT(0) comparison", c6_comparison),
        ("solver exactness", c7_solver),
        ("subsolution", c8_subsolution),
        ("mean-value constant", c9_moser),
        ("Lipschitz signature", c10_lipschitz),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name} [{secs:.1}s]: {detail}", k + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
