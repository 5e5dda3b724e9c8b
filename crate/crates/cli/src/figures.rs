use anyhow::Result;
use clap::ValueEnum;
use darkband_core::bipartite::{bipartite_rates, BipartiteConfig};
use darkband_core::catastrophe::{dark_band_intensity, dark_band_rate, raindrop_deflection, RainbowParams};
use darkband_core::classical::{detect_folds, ensemble, Model, CUSP_CURVATURE};
use darkband_core::complexmech::{asymptotic_rate, dark_continuations, semiclassical_loschmidt, Normalization};
use darkband_core::dicke::{
    build_hamiltonian, diagonalize, fock_map, loschmidt, rate_function, DickeSpace, QuenchConfig, RateNorm,
};
use darkband_core::scan::{branch_dpt, branch_rate_surface, rate_surface_exact, switching_line, RateSurface};
use darkband_core::wkb::{bohr_sommerfeld, energy_window, return_time, Branch};
use darkband_core::{Error, Exec};

use crate::emit::{num, opt, rate, Outputs, UNDERFLOW};
use crate::params::{bad, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fockmap,
    Loschmidt,
    Classical,
    Wkb,
    Darkband,
    Bipartite,
    Switchline,
    Rainbow,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fockmap => "fockmap",
            Figure::Loschmidt => "loschmidt",
            Figure::Classical => "classical",
            Figure::Wkb => "wkb",
            Figure::Darkband => "darkband",
            Figure::Bipartite => "bipartite",
            Figure::Switchline => "switchline",
            Figure::Rainbow => "rainbow",
        }
    }

    pub fn defaults(self) -> Vec<(&'static str, &'static str)> {
        let mut d = vec![("workers", "0"), ("out-dir", "out")];
        let spin = [("j", "80"), ("n-atoms", ""), ("m0", "auto"), ("omega-over-g", "1"), ("legacy-sign", "false")];
        match self {
            Figure::Fockmap => {
                d.extend(spin);
                d.extend([("t-max", "6"), ("t-steps", "241"), ("norm", "per-j"), ("max-cells", "50000000")]);
            }
            Figure::Loschmidt => {
                d.extend(spin);
                d.extend([("t-max", "6"), ("t-steps", "601"), ("norm", "per-j")]);
            }
            Figure::Classical => {
                d.extend(spin);
                d.extend([("t-max", "6"), ("t-steps", "61"), ("n-traj", "720")]);
            }
            Figure::Wkb => {
                d.extend(spin);
                d.extend([("e-steps", "401")]);
            }
            Figure::Darkband => {
                d.extend(spin);
                d.extend([("j", "350"), ("t-max", "6"), ("t-steps", "600"), ("norm", "per-j")]);
            }
            Figure::Bipartite => {
                d.extend([("n-atoms", "20"), ("m0", "auto"), ("omega-over-g", "1"), ("legacy-sign", "false")]);
                d.extend([("t-max", "6"), ("t-steps", "241")]);
            }
            Figure::Switchline => {
                d.extend(spin);
                d.extend([("t-min", "2"), ("t-max", "5"), ("t-steps", "400"), ("eta-steps", "301")]);
                d.extend([("norm", "per-j"), ("max-cells", "50000000")]);
            }
            Figure::Rainbow => {
                d.extend([("n", "1.3333"), ("k", "50"), ("d1", "1"), ("d2", "1")]);
                d.extend([("h-steps", "401"), ("theta-steps", "401")]);
            }
        }
        // Later entries override earlier ones (darkband's `j`).
        let mut out: Vec<(&str, &str)> = Vec::new();
        for (k, v) in d {
            match out.iter_mut().find(|e| e.0 == k) {
                Some(e) => e.1 = v,
                None => out.push((k, v)),
            }
        }
        out
    }

    pub fn run(self, p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
        match self {
            Figure::Fockmap => run_fockmap(p, exec, out),
            Figure::Loschmidt => run_loschmidt(p, exec, out),
            Figure::Classical => run_classical(p, exec, out),
            Figure::Wkb => run_wkb(p, out),
            Figure::Darkband => run_darkband(p, exec, out),
            Figure::Bipartite => run_bipartite(p, exec, out),
            Figure::Switchline => run_switchline(p, exec, out),
            Figure::Rainbow => run_rainbow(p, out),
        }
    }
}

fn model(p: &Params) -> Result<Model> {
    let m = Model::new(1.0, p.positive("omega-over-g")?);
    Ok(if p.flag("legacy-sign")? { m.with_legacy_sign() } else { m })
}

fn space(p: &Params) -> Result<DickeSpace> {
    if p.is_set("n-atoms") {
        if p.explicit("j") {
            return bad("set either `j` or `n-atoms`, not both");
        }
        return Ok(DickeSpace::from_atoms(p.count("n-atoms", 1)? as u32));
    }
    let j = p.positive("j")?;
    match DickeSpace::from_j(j) {
        Ok(s) => Ok(s),
        Err(_) => p.fail_with("j", "a positive integer or half-integer"),
    }
}

fn m0(p: &Params, s: DickeSpace) -> Result<f64> {
    match p.m0()? {
        None => Ok(s.nearest_m(0.6)),
        Some(m) if s.index(m).is_ok() => Ok(m),
        Some(_) => p.fail_with("m0", &format!("a value in [-{0}, {0}]", s.j())),
    }
}

fn norm(p: &Params) -> Result<RateNorm> {
    Ok(match p.choice("norm", &["per-j", "per-N"])? {
        "per-j" => RateNorm::PerJ,
        _ => RateNorm::PerN,
    })
}

/// `n` points from `lo` to `hi` inclusive.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn times(p: &Params) -> Result<Vec<f64>> {
    Ok(grid(0.0, p.positive("t-max")?, p.count("t-steps", 2)?))
}

fn quench(p: &Params, exec: Exec) -> Result<QuenchConfig> {
    let (s, m) = (space(p)?, model(p)?);
    Ok(QuenchConfig { g: m.g, omega: m.omega, space: s, m0: m0(p, s)?, times: times(p)?, norm: norm(p)?, exec })
}

fn budget(p: &Params, cells: usize) -> Result<()> {
    let max = p.count("max-cells", 1)?;
    if cells > max {
        return Err(Error::Resource(format!("{cells} output cells exceed max-cells = {max}")).into());
    }
    Ok(())
}

fn run_fockmap(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let cfg = quench(p, exec)?;
    budget(p, cfg.times.len() * cfg.space.dim())?;
    let map = fock_map(&cfg)?;
    let ms = map.ms();
    let rows = map
        .times
        .iter()
        .zip(&map.columns)
        .flat_map(|(t, col)| ms.iter().zip(col).map(move |(m, a)| vec![num(*t), m.to_string(), num(*a)]));
    out.csv("fockmap.csv", &["t", "m", "abs_amp"], rows)
}

fn run_loschmidt(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let cfg = quench(p, exec)?;
    let echo = loschmidt(&cfg)?;
    let r = rate_function(&echo.l, cfg.space, cfg.norm);
    let rows = echo.times.iter().zip(&echo.l).zip(r).map(|((t, l), r)| vec![num(*t), num(*l), rate(r)]);
    out.csv("loschmidt.csv", &["t", "L", "r"], rows)
}

fn run_classical(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let s = space(p)?;
    let eta0 = m0(p, s)? / s.j();
    let ts = times(p)?;
    let ens = ensemble(eta0, p.count("n-traj", 8)?, &ts, &model(p)?, 1e-10, exec)?;
    let mut rows = Vec::new();
    for (k, t) in ens.times.iter().enumerate() {
        for (i, phi0) in ens.phi0.iter().enumerate() {
            rows.push(vec![num(*t), num(*phi0), num(ens.phi[k][i]), num(ens.eta[k][i])]);
        }
    }
    out.csv("ensemble.csv", &["t", "phi0", "phi", "eta"], rows)?;
    let mut folds = Vec::new();
    for (k, t) in ens.times.iter().enumerate() {
        let Ok(f) = detect_folds(ens.snapshot(k), CUSP_CURVATURE) else { continue };
        for fold in f.folds {
            folds.push(vec![num(*t), num(fold.eta), u8::from(fold.is_cusp).to_string()]);
        }
    }
    out.csv("folds.csv", &["t", "eta_star", "is_cusp"], folds)
}

fn run_wkb(p: &Params, out: &mut Outputs) -> Result<()> {
    let (s, m) = (space(p)?, model(p)?);
    let eta0 = m0(p, s)? / s.j();
    let n = p.count("e-steps", 1)?;
    let (lo, hi) = energy_window(eta0, &m);
    let mut rows = Vec::new();
    for b in Branch::BOTH {
        for i in 0..n {
            let eps = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            if let Ok(t) = return_time(eps, b, eta0, &m) {
                rows.push(vec![b.k().to_string(), num(eps), num(t)]);
            }
        }
    }
    out.csv("TE.csv", &["branch", "eps", "T"], rows)?;
    let levels = bohr_sommerfeld(s, &m)?;
    let exact = diagonalize(s, &build_hamiltonian(s, m.g, m.omega))?;
    let width = 2.0 * m.omega;
    let rows = levels.iter().map(|l| {
        let e = exact.energies[l.n] / s.j();
        vec![l.n.to_string(), num(l.eps), num(e), num((l.eps - e) / width)]
    });
    out.csv("bs_levels.csv", &["n", "eps_wkb", "eps_exact", "rel_err"], rows)
}

fn run_darkband(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let (s, m) = (space(p)?, model(p)?);
    let eta0 = m0(p, s)? / s.j();
    let scale = s.j() / norm(p)?.size(s);
    // The semiclassical branches need t > 0.
    let n = p.count("t-steps", 1)?;
    let t_max = p.positive("t-max")?;
    let ts: Vec<f64> = (1..=n).map(|i| t_max * i as f64 / n as f64).collect();
    let [d, w] = dark_continuations(&ts, eta0, &m, exec)?;
    let rows = [d, w].into_iter().flat_map(|c| {
        c.solutions.into_iter().map(move |sol| {
            vec![
                c.branch.k().to_string(),
                num(sol.t),
                num(sol.phi0.re),
                num(sol.phi0.im),
                num(sol.action.re),
                num(sol.action.im),
                num(sol.residual),
            ]
        })
    });
    out.csv("saddles.csv", &["branch", "t", "re_phi0", "im_phi0", "re_S", "im_S", "residual"], rows)?;
    let curve = asymptotic_rate(&ts, eta0, &m, exec)?;
    let finite = semiclassical_loschmidt(s.j(), &ts, eta0, &m, Normalization::Fock, exec)?;
    let scaled = |x: Option<f64>| x.map(|v| v * scale);
    let rows = (0..ts.len()).map(|k| {
        let pt = &finite[k];
        let l = if pt.divergent {
            "nan".to_string()
        } else if pt.l < darkband_core::dicke::UNDERFLOW_FLOOR {
            UNDERFLOW.to_string()
        } else {
            num(pt.l)
        };
        vec![num(ts[k]), opt(scaled(curve.r0[k])), opt(scaled(curve.r1[k])), num(curve.r[k] * scale), l]
    });
    out.csv("rate_semiclassical.csv", &["t", "r0", "r1", "r_min", "L_finite_j"], rows)
}

fn run_bipartite(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let n = p.count("n-atoms", 2)?;
    let m = model(p)?;
    let mut cfg = BipartiteConfig::reference(n as u32, times(p)?)?;
    cfg.g = m.g;
    cfg.omega = m.omega;
    cfg.exec = exec;
    cfg.m0 = m0(p, cfg.space.side())?;
    let rows = bipartite_rates(&cfg)?.into_iter().map(|row| {
        let e = row.echo;
        vec![
            num(row.t),
            num(e.l),
            rate(e.r),
            num(e.l_plus),
            num(e.l_minus),
            rate(e.r_plus),
            rate(e.r_minus),
            num(e.p_plus),
        ]
    });
    out.csv("bipartite_rates.csv", &["t", "L", "r", "L_plus", "L_minus", "r_plus", "r_minus", "p_plus"], rows)
}

fn surface_rows<'a>(s: &'a RateSurface, scale: f64, masked: &'static str) -> impl Iterator<Item = Vec<String>> + 'a {
    let label = s.source.label();
    s.times.iter().enumerate().flat_map(move |(k, t)| {
        let label = label.clone();
        s.etas.iter().enumerate().map(move |(i, e)| {
            let r = s.get(k, i).map_or_else(|| masked.to_string(), |v| num(v * scale));
            vec![num(*t), num(*e), r, label.clone()]
        })
    })
}

fn run_switchline(p: &Params, exec: Exec, out: &mut Outputs) -> Result<()> {
    let (s, m) = (space(p)?, model(p)?);
    let eta0 = m0(p, s)? / s.j();
    let (t_min, t_max) = (p.positive("t-min")?, p.positive("t-max")?);
    if t_max <= t_min {
        return p.fail_with("t-max", "a value above t-min");
    }
    let ts = grid(t_min, t_max, p.count("t-steps", 2)?);
    let es = grid(-1.0, 1.0, p.count("eta-steps", 2)?);
    budget(p, ts.len() * (es.len() + s.dim()))?;
    let scale = s.j() / norm(p)?.size(s);
    let cfg = QuenchConfig {
        g: m.g,
        omega: m.omega,
        space: s,
        m0: m0(p, s)?,
        times: ts.clone(),
        norm: norm(p)?,
        exec,
    };
    let exact = rate_surface_exact(&cfg)?;
    let r0 = branch_rate_surface(Branch::Direct, &ts, &es, eta0, &m, exec)?;
    let r1 = branch_rate_surface(Branch::Winding, &ts, &es, eta0, &m, exec)?;
    let rows = surface_rows(&exact, 1.0, UNDERFLOW)
        .chain(surface_rows(&r0, scale, "nan"))
        .chain(surface_rows(&r1, scale, "nan"));
    out.csv("surface.csv", &["t", "eta", "r", "source"], rows)?;
    let line = switching_line(&r0, &r1)?;
    out.csv("switchline.csv", &["t", "eta"], line.iter().map(|q| vec![num(q.0), num(q.1)]))?;
    let dpt = branch_dpt(&ts, eta0, &m, exec)?;
    out.csv("dpt.csv", &["t_c", "r_at_tc"], dpt.map(|d| vec![num(d.t_c), num(d.r * scale)]))
}

fn run_rainbow(p: &Params, out: &mut Outputs) -> Result<()> {
    let n = p.positive("n")?;
    let params = RainbowParams::for_index(n, p.positive("k")?, p.positive("d1")?, p.positive("d2")?)?;
    let hs = grid(0.0, 1.0, p.count("h-steps", 2)?);
    let mut rows = Vec::new();
    for order in [1u8, 2] {
        for &h in &hs {
            rows.push(vec![order.to_string(), num(h), num(raindrop_deflection(h, n, order)?.to_degrees())]);
        }
    }
    out.csv("rainbow_io.csv", &["order", "h", "theta_deg"], rows)?;
    let mut rows = Vec::new();
    for theta in grid(params.theta1, params.theta2, p.count("theta-steps", 2)?) {
        let i = dark_band_intensity(theta, &params)?;
        let r = dark_band_rate(theta, &params)?.rate;
        rows.push(vec![num(theta.to_degrees()), num(i), num(r)]);
    }
    out.csv("darkband.csv", &["theta_deg", "I", "r"], rows)
}
