//! The six subcommands as [`Experiment`]s.

use anyhow::{bail, Result};
use depinning::criterion::{
    brute_force_blocking_probability, fit_decay, sample_outcome, BlockingEstimate, BoxSpec, CrossingOutcome, DecayFit,
    DecayPoint, ORACLE_MAX_SITES,
};
use depinning::dynamics::{velocity_estimate, MonotoneTable, UpdateRule};
use depinning::environment::{estimate_mixing_with, EnergyField, LawSpec, MixingOptions, SiteEnergy, TestFunction};
use depinning::percolation::{crossing_threshold, pc_from_thresholds, sample_seed};
use depinning::renorm::{
    check_assumptions, iterate_recursion, rk_sequence, speed_lower_bound, suggest_params, supt_instance, SupTGeometry,
};
use depinning::rng::{derive_seed, generator};
use depinning::soft::{
    deep_trap_check, deep_trap_probability_bound, find_lambda, lambda_condition, soft_sample, summarize_decay, SOFT_A,
};
use depinning::stats::{mean_std, Proportion};
use depinning::{Law, Rule};

use crate::config::Config;
use crate::output::Row;
use crate::run::{metric, Cell, Experiment, Metrics};

const LAW_KEYS: [&str; 9] = ["law", "mean", "variance", "p", "trap", "free", "value", "ma_window", "base_law"];
const RULE_KEYS: [&str; 6] = ["rule", "threshold", "table_clamp", "table_lo", "table_hi", "table_seed"];

fn keys(own: &[&'static str], law: bool, rule: bool) -> Vec<&'static str> {
    let mut k = own.to_vec();
    if law {
        k.extend(LAW_KEYS);
    }
    if rule {
        k.extend(RULE_KEYS);
    }
    k
}

fn single_law(cfg: &Config, name: &str, d: usize) -> Result<Law> {
    Ok(match name {
        "bernoulli" => LawSpec::BernoulliTrap {
            p: cfg.get_or("p", 0.05)?,
            trap: cfg.get_or("trap", -3.0 * (d as f64 - 1.0))?,
            free: cfg.get_or("free", 0.5)?,
        },
        "gaussian" => LawSpec::gaussian(cfg.get_or("mean", 0.0)?, cfg.get_or("variance", 1.0)?),
        "constant" => match cfg.get::<f64>("value")? {
            Some(v) => LawSpec::Constant { value: SiteEnergy::new(v) },
            None => bail!("constant law needs `value`"),
        },
        other => bail!("unknown law `{other}`; expected bernoulli, gaussian, constant or moving-average"),
    })
}

fn law_from(cfg: &Config, d: usize, default: &str) -> Result<Law> {
    let name = cfg.raw("law").unwrap_or(default);
    let law = if name == "moving-average" {
        let base = single_law(cfg, cfg.raw("base_law").unwrap_or("gaussian"), d)?;
        LawSpec::moving_average(cfg.get_or("ma_window", 2)?, base)
    } else {
        single_law(cfg, name, d)?
    };
    law.validate()?;
    Ok(law)
}

fn rule_from(cfg: &Config, d: usize, default: &str) -> Result<Rule> {
    let rule = match cfg.raw("rule").unwrap_or(default) {
        "lipschitz2" => UpdateRule::Lipschitz2,
        "soft" => UpdateRule::SoftLaplacian,
        "threshold" => UpdateRule::LaplacianThreshold {
            threshold: cfg.get_or("threshold", 0.0)?,
        },
        "random-monotone" => {
            let mut rng = generator(cfg.get_or("table_seed", 0)?);
            UpdateRule::GeneralMonotone(MonotoneTable::random(
                2 * (d - 1),
                cfg.get_or("table_clamp", 2)?,
                cfg.get_or("table_lo", -2.0)?,
                cfg.get_or("table_hi", 2.0)?,
                &mut rng,
            )?)
        }
        other => bail!("unknown rule `{other}`; expected lipschitz2, soft, threshold or random-monotone"),
    };
    rule.validate(d)?;
    Ok(rule)
}

fn dim(cfg: &Config) -> Result<usize> {
    let d: usize = cfg.get_or("dim", 2)?;
    if !(2..=5).contains(&d) {
        bail!("dim must be in 2..=5");
    }
    Ok(d)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn outcome_metrics(o: &CrossingOutcome) -> Metrics {
    vec![
        ("blocked".into(), flag(o.is_blocked())),
        ("exhausted".into(), flag(matches!(o, CrossingOutcome::Exhausted { .. }))),
        ("sweeps".into(), o.sweeps() as f64),
    ]
}

fn blocking_estimate(spec: BoxSpec, samples: &[Metrics]) -> BlockingEstimate {
    let blocked = samples.iter().filter(|m| metric(m, "blocked") == 1.0).count() as u64;
    let exhausted = samples.iter().filter(|m| metric(m, "exhausted") == 1.0).count() as u64;
    let times: Vec<f64> = samples
        .iter()
        .filter(|m| metric(m, "blocked") == 0.0 && metric(m, "exhausted") == 0.0)
        .map(|m| metric(m, "sweeps"))
        .collect();
    BlockingEstimate {
        spec,
        proportion: Proportion::new(blocked, samples.len() as u64),
        mean_crossing_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
        exhausted,
    }
}

fn estimate_rows(l: i64, param: &str, e: &BlockingEstimate) -> Vec<Row> {
    let p = &e.proportion;
    vec![
        Row::aggregate(Some(l), param, "p_hat", p.estimate).with_uncertainty(p.std_err).with_n(p.trials),
        Row::aggregate(Some(l), param, "ci_lo", p.ci.0),
        Row::aggregate(Some(l), param, "ci_hi", p.ci.1),
        Row::aggregate(Some(l), param, "mean_crossing_time", e.mean_crossing_time.unwrap_or(f64::NAN)),
        Row::aggregate(Some(l), param, "exhausted", e.exhausted as f64),
    ]
}

fn fit_rows(param: &str, fit: &DecayFit, strictly_decreasing: bool) -> Vec<Row> {
    let slope = |f: &Option<depinning::stats::LinearFit>| f.as_ref().map_or((f64::NAN, f64::NAN), |f| (-f.slope, f.slope_se));
    let (rho, rho_se) = slope(&fit.power);
    let (kappa, kappa_se) = slope(&fit.stretched);
    vec![
        Row::aggregate(None, param, "rho_hat", rho).with_uncertainty(rho_se),
        Row::aggregate(None, param, "kappa_hat", kappa).with_uncertainty(kappa_se),
        Row::aggregate(None, param, "degenerate_fit", flag(fit.degenerate)),
        Row::aggregate(None, param, "zero_sizes", fit.zeros.len() as f64),
        Row::aggregate(None, param, "strictly_decreasing", flag(strictly_decreasing)),
    ]
}

fn cells_over(params: &[String], sizes: &[i64], samples: u64) -> Vec<Cell> {
    params
        .iter()
        .flat_map(|p| {
            sizes.iter().map(move |&l| Cell {
                l: Some(l),
                param: p.clone(),
                samples,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- simulate

pub struct Simulate {
    d: usize,
    law: Law,
    rule: Rule,
    window: i64,
    t_max: u64,
    burn_in: u64,
    n_seeds: u64,
    seed: u64,
}

impl Simulate {
    pub const KEYS: [&'static str; 6] = ["dim", "window", "t_max", "burn_in", "n_seeds", "seed"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&keys(&Self::KEYS, true, true))?;
        let d = dim(cfg)?;
        let t_max = cfg.get_or("t_max", 10_000)?;
        Ok(Simulate {
            d,
            law: law_from(cfg, d, "gaussian")?,
            rule: rule_from(cfg, d, "soft")?,
            window: cfg.get_or("window", 512)?,
            t_max,
            burn_in: cfg.get_or("burn_in", t_max / 10)?,
            n_seeds: cfg.get_or("n_seeds", 20)?,
            seed: cfg.get_or("seed", 0)?,
        })
    }
}

impl Experiment for Simulate {
    fn cells(&self) -> Vec<Cell> {
        vec![Cell {
            l: Some(self.window),
            param: String::new(),
            samples: self.n_seeds,
        }]
    }

    fn seed_of(&self, _: usize, index: u64) -> u64 {
        derive_seed(self.seed, index)
    }

    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics> {
        let field = EnergyField::new(self.d, self.law.clone(), self.seed_of(cell, index))?;
        let v = velocity_estimate(&field, &self.rule, self.window, self.t_max, self.burn_in)?;
        Ok(vec![
            ("velocity".into(), v.velocity()),
            ("advance".into(), v.advance as f64),
            ("duration".into(), v.duration as f64),
            ("halted".into(), flag(v.halted)),
        ])
    }

    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let v: Vec<f64> = samples[0].iter().map(|m| metric(m, "velocity")).collect();
        let (mean, sd) = mean_std(&v);
        let n = v.len() as u64;
        let l = Some(self.window);
        Ok(vec![
            Row::aggregate(l, "", "velocity_mean", mean).with_uncertainty(sd / (n as f64).sqrt()).with_n(n),
            Row::aggregate(l, "", "velocity_std", sd).with_n(n),
            Row::aggregate(l, "", "relative_spread", sd / mean).with_n(n),
            Row::aggregate(l, "", "velocity_min", v.iter().cloned().fold(f64::INFINITY, f64::min)).with_n(n),
        ])
    }
}

// --------------------------------------------------------------- criterion

pub struct Criterion {
    d: usize,
    h: i64,
    a: u32,
    sizes: Vec<i64>,
    laws: Vec<(String, Law)>,
    rule: Rule,
    n_samples: u64,
    seed: u64,
    oracle: bool,
}

impl Criterion {
    pub const KEYS: [&'static str; 8] = ["dim", "h", "a", "l_list", "p_list", "n_samples", "seed", "oracle"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&keys(&Self::KEYS, true, true))?;
        let d = dim(cfg)?;
        let base = law_from(cfg, d, "bernoulli")?;
        let laws = match cfg.list::<f64>("p_list")? {
            Some(ps) => {
                let LawSpec::BernoulliTrap { trap, free, .. } = base else {
                    bail!("p_list needs the bernoulli law");
                };
                ps.into_iter()
                    .map(|p| {
                        let law = LawSpec::BernoulliTrap { p, trap, free };
                        law.validate().map(|_| (format!("p={p}"), law))
                    })
                    .collect::<depinning::Result<Vec<_>>>()?
            }
            None => vec![(String::new(), base)],
        };
        let mut sizes = cfg.list_or("l_list", vec![8i64, 16, 32, 64])?;
        sizes.sort_unstable();
        sizes.dedup();
        let c = Criterion {
            d,
            h: cfg.get_or("h", 10)?,
            a: cfg.get_or("a", 1)?,
            sizes,
            laws,
            rule: rule_from(cfg, d, "lipschitz2")?,
            n_samples: cfg.get_or("n_samples", 1000)?,
            seed: cfg.get_or("seed", 0)?,
            oracle: cfg.get_or("oracle", false)?,
        };
        for &l in &c.sizes {
            BoxSpec::new(c.d, c.h, l, c.a)?;
        }
        if c.n_samples == 0 || c.sizes.is_empty() {
            bail!("need n_samples >= 1 and a non-empty l_list");
        }
        Ok(c)
    }

    fn cell(&self, c: usize) -> (&Law, i64) {
        (&self.laws[c / self.sizes.len()].1, self.sizes[c % self.sizes.len()])
    }
}

impl Experiment for Criterion {
    fn cells(&self) -> Vec<Cell> {
        let params: Vec<String> = self.laws.iter().map(|(p, _)| p.clone()).collect();
        cells_over(&params, &self.sizes, self.n_samples)
    }

    fn seed_of(&self, _: usize, index: u64) -> u64 {
        derive_seed(self.seed, index)
    }

    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics> {
        let (law, l) = self.cell(cell);
        let spec = BoxSpec::new(self.d, self.h, l, self.a)?;
        Ok(outcome_metrics(&sample_outcome(law, &self.rule, &spec, self.seed, index)?))
    }

    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let mut rows = Vec::new();
        for (k, (param, law)) in self.laws.iter().enumerate() {
            let mut estimates = Vec::new();
            for (j, &l) in self.sizes.iter().enumerate() {
                let spec = BoxSpec::new(self.d, self.h, l, self.a)?;
                let e = blocking_estimate(spec, &samples[k * self.sizes.len() + j]);
                rows.extend(estimate_rows(l, param, &e));
                if self.oracle && spec.sites() <= ORACLE_MAX_SITES {
                    let o = brute_force_blocking_probability(law, &self.rule, &spec)?;
                    rows.push(Row::aggregate(Some(l), param.as_str(), "oracle_exact", o.value));
                    let se = (o.value * (1.0 - o.value) / e.proportion.trials as f64).sqrt();
                    rows.push(Row::aggregate(Some(l), param.as_str(), "oracle_z", (e.estimate() - o.value) / se));
                }
                estimates.push(e);
            }
            if self.sizes.len() >= 2 {
                let points: Vec<DecayPoint> = estimates
                    .iter()
                    .map(|e| DecayPoint {
                        l: e.spec.l as f64,
                        p: e.estimate(),
                        trials: Some(e.proportion.trials),
                    })
                    .collect();
                let strict = estimates.windows(2).all(|w| w[1].estimate() < w[0].estimate());
                rows.extend(fit_rows(param, &fit_decay(&points), strict));
            }
        }
        Ok(rows)
    }
}

// ------------------------------------------------------------- percolation

pub struct Percolation {
    sizes: Vec<i64>,
    grid: Vec<f64>,
    n_samples: u64,
    bootstrap: usize,
    seed: u64,
}

impl Percolation {
    pub const KEYS: [&'static str; 7] = ["l_list", "p_min", "p_max", "p_steps", "n_samples", "bootstrap", "seed"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&Self::KEYS)?;
        let mut sizes = cfg.list_or("l_list", vec![16i64, 32, 64, 128])?;
        sizes.sort_unstable();
        sizes.dedup();
        let (lo, hi): (f64, f64) = (cfg.get_or("p_min", 0.2)?, cfg.get_or("p_max", 0.7)?);
        let steps: usize = cfg.get_or("p_steps", 41)?;
        if sizes.len() < 2 || steps < 3 || !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) || sizes[0] < 1 {
            bail!("need two sizes >= 1, p_steps >= 3 and 0 <= p_min <= p_max <= 1");
        }
        let grid = (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect();
        Ok(Percolation {
            sizes,
            grid,
            n_samples: cfg.get_or("n_samples", 2000)?,
            bootstrap: cfg.get_or("bootstrap", 200)?,
            seed: cfg.get_or("seed", 0)?,
        })
    }
}

impl Experiment for Percolation {
    fn cells(&self) -> Vec<Cell> {
        cells_over(&[String::new()], &self.sizes, self.n_samples)
    }

    fn seed_of(&self, cell: usize, index: u64) -> u64 {
        sample_seed(self.seed, self.sizes[cell], index)
    }

    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics> {
        Ok(vec![("theta".into(), crossing_threshold(self.sizes[cell], self.seed_of(cell, index)))])
    }

    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let thresholds = samples.iter().map(|c| c.iter().map(|m| metric(m, "theta")).collect()).collect();
        let est = pc_from_thresholds(&self.sizes, thresholds, &self.grid, self.bootstrap, self.seed)?;
        let mut rows = Vec::new();
        for c in &est.curves {
            for (p, prop) in &c.points {
                rows.push(
                    Row::aggregate(Some(c.l), format!("p={p}"), "crossing_fraction", prop.estimate)
                        .with_uncertainty(prop.std_err)
                        .with_n(prop.trials),
                );
            }
        }
        for i in &est.intersections {
            rows.push(
                Row::aggregate(None, format!("{}-{}", i.l_small, i.l_large), "p_star", i.p_star).with_uncertainty(i.std_err),
            );
        }
        rows.push(Row::aggregate(None, "", "pc_hat", est.pc_hat).with_uncertainty(est.std_err));
        rows.push(Row::aggregate(None, "", "pc_spread", est.spread));
        Ok(rows)
    }
}

// ------------------------------------------------------------ renorm-check

pub struct RenormCheck {
    cfg: Config,
    supt: Option<(Law, SupTGeometry, u64)>,
    seed: u64,
}

impl RenormCheck {
    pub const KEYS: [&'static str; 17] = [
        "d",
        "a",
        "h",
        "gamma",
        "big_d",
        "alpha",
        "rho",
        "l0",
        "r0",
        "k_max",
        "log_w0",
        "supt_instances",
        "supt_p",
        "supt_l0",
        "supt_gamma",
        "supt_h",
        "seed",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&Self::KEYS)?;
        let n: u64 = cfg.get_or("supt_instances", 0)?;
        let supt = if n > 0 {
            let law = LawSpec::bernoulli(cfg.get_or("supt_p", 0.3)?, 2);
            law.validate()?;
            let g = SupTGeometry {
                d: 2,
                h: cfg.get_or("supt_h", 2)?,
                a: 1,
                l0: cfg.get_or("supt_l0", 4)?,
                gamma: cfg.get_or("supt_gamma", 2)?,
            };
            if g.h < 1 || g.l0 < 1 || g.gamma < 2 {
                bail!("need supt_h, supt_l0 >= 1 and supt_gamma >= 2");
            }
            Some((law, g, n))
        } else {
            None
        };
        let r = RenormCheck {
            cfg: cfg.clone(),
            supt,
            seed: cfg.get_or("seed", 0)?,
        };
        // parse errors surface here; infeasibility is reported as a row
        let _ = r.params()?;
        Ok(r)
    }

    fn params(&self) -> Result<std::result::Result<depinning::Params, depinning::renorm::Infeasible>> {
        let c = &self.cfg;
        let suggested = suggest_params::<f64>(c.get_or("d", 2)?, c.get_or("a", 1)?, c.get("alpha")?, c.get("rho")?)?;
        Ok(match suggested {
            Ok(mut p) => {
                p.gamma = c.get_or("gamma", p.gamma)?;
                p.big_d = c.get_or("big_d", p.big_d)?;
                p.l0 = c.get_or("l0", p.l0)?;
                p.h = c.get_or("h", p.h)?;
                p.r0 = c.get_or("r0", p.r0)?;
                Ok(p)
            }
            Err(e) => Err(e),
        })
    }
}

impl Experiment for RenormCheck {
    fn cells(&self) -> Vec<Cell> {
        match &self.supt {
            Some((_, g, n)) => vec![Cell {
                l: Some(g.l0),
                param: "supt".into(),
                samples: *n,
            }],
            None => Vec::new(),
        }
    }

    fn seed_of(&self, _: usize, index: u64) -> u64 {
        derive_seed(self.seed, index)
    }

    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics> {
        let (law, g, _) = self.supt.as_ref().expect("supt cell");
        let inst = supt_instance(law, &UpdateRule::Lipschitz2, g, self.seed_of(cell, index))?;
        let opt = |v: Option<u64>| v.map_or(f64::INFINITY, |t| t as f64);
        Ok(vec![("lhs".into(), opt(inst.lhs)), ("rhs".into(), opt(inst.rhs))])
    }

    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let mut rows = Vec::new();
        match self.params()? {
            Err(inf) => {
                rows.push(Row::aggregate(None, inf.constraint.as_str(), "infeasible_required_above", inf.required_above));
            }
            Ok(p) => {
                for (name, v) in [
                    ("gamma", f64::from(p.gamma)),
                    ("big_d", f64::from(p.big_d)),
                    ("alpha", p.alpha),
                    ("rho", p.rho),
                    ("l0", p.l0 as f64),
                    ("h", f64::from(p.h)),
                    ("r0", p.r0),
                ] {
                    rows.push(Row::aggregate(None, name, "param", v));
                }
                let report = check_assumptions(&p);
                for c in &report.checks {
                    rows.push(Row::aggregate(None, c.name.as_str(), "margin", c.margin));
                    rows.push(Row::aggregate(None, c.name.as_str(), "holds", flag(c.holds)));
                }
                rows.push(Row::aggregate(None, "", "all_constraints_hold", flag(report.all_pass())));
                rows.push(Row::aggregate(
                    None,
                    "",
                    "l0_required",
                    report.l0_required.map_or(f64::NAN, |v| v as f64),
                ));
                let k_max: usize = self.cfg.get_or("k_max", 10)?;
                let rk = rk_sequence(&p, k_max)?;
                for (k, r) in rk.r.iter().enumerate() {
                    rows.push(Row::aggregate(None, format!("k={k}"), "r", *r));
                }
                rows.push(Row::aggregate(None, "", "r_sup", rk.sup));
                rows.push(Row::aggregate(None, "", "r_sup_bound", rk.sup_bound));
                rows.push(Row::aggregate(None, "", "speed_lower_bound", speed_lower_bound(&p)?));
                let target0 = -2.0 * f64::from(p.d) * (f64::from(p.gamma) - 1.0) * (p.l0 as f64).ln();
                let log_w0 = self.cfg.get_or("log_w0", target0)?;
                let rec = iterate_recursion(&p, log_w0, k_max)?;
                for s in &rec.steps {
                    let k = format!("k={}", s.k);
                    rows.push(Row::aggregate(None, k.as_str(), "log_w", s.log_w));
                    rows.push(Row::aggregate(None, k.as_str(), "recursion_margin", s.margin));
                }
                rows.push(Row::aggregate(None, "", "recursion_passed", flag(rec.passed)));
                rows.push(Row::aggregate(
                    None,
                    "",
                    "recursion_first_failure",
                    rec.first_failure.map_or(f64::NAN, |k| k as f64),
                ));
            }
        }
        if let Some((_, g, n)) = &self.supt {
            let s = &samples[0];
            let skipped = s.iter().filter(|m| metric(m, "lhs").is_infinite() || metric(m, "rhs").is_infinite()).count();
            let violations = s.iter().filter(|m| metric(m, "lhs") > metric(m, "rhs") && metric(m, "rhs").is_finite()).count();
            let l = Some(g.l0);
            rows.push(Row::aggregate(l, "supt", "checked", (s.len() - skipped) as f64).with_n(*n));
            rows.push(Row::aggregate(l, "supt", "skipped", skipped as f64).with_n(*n));
            rows.push(Row::aggregate(l, "supt", "violations", violations as f64).with_n(*n));
        }
        Ok(rows)
    }
}

// -------------------------------------------------------------- soft-check

pub struct SoftCheck {
    h: i64,
    sizes: Vec<i64>,
    means: Vec<f64>,
    variance: f64,
    lambda: f64,
    n_samples: u64,
    deep_trap_samples: u64,
    seed: u64,
}

impl SoftCheck {
    pub const KEYS: [&'static str; 8] =
        ["h", "l_list", "f_list", "variance", "lambda", "n_samples", "deep_trap_samples", "seed"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&Self::KEYS)?;
        let mut sizes = cfg.list_or("l_list", vec![4i64, 9, 16, 25])?;
        sizes.sort_unstable();
        sizes.dedup();
        let s = SoftCheck {
            h: cfg.get_or("h", 4)?,
            sizes,
            means: cfg.list_or("f_list", vec![5.0])?,
            variance: cfg.get_or("variance", 1.0)?,
            lambda: cfg.get_or("lambda", 1.0)?,
            n_samples: cfg.get_or("n_samples", 1000)?,
            deep_trap_samples: cfg.get_or("deep_trap_samples", 0)?,
            seed: cfg.get_or("seed", 0)?,
        };
        for &l in &s.sizes {
            BoxSpec::new(2, s.h, l, SOFT_A)?;
        }
        for &f in &s.means {
            LawSpec::gaussian(f, s.variance).validate()?;
        }
        if s.n_samples == 0 || s.sizes.is_empty() || s.means.is_empty() || !(s.lambda > 0.0) {
            bail!("need n_samples >= 1, non-empty l_list and f_list, lambda > 0");
        }
        Ok(s)
    }

    fn param(f: f64) -> String {
        format!("f={f}")
    }
}

impl Experiment for SoftCheck {
    fn cells(&self) -> Vec<Cell> {
        let params: Vec<String> = self.means.iter().map(|&f| Self::param(f)).collect();
        cells_over(&params, &self.sizes, self.n_samples)
    }

    fn seed_of(&self, _: usize, index: u64) -> u64 {
        derive_seed(self.seed, index)
    }

    fn run_sample(&self, cell: usize, index: u64) -> Result<Metrics> {
        let f = self.means[cell / self.sizes.len()];
        let l = self.sizes[cell % self.sizes.len()];
        let spec = BoxSpec::new(2, self.h, l, SOFT_A)?;
        let s = soft_sample(f, self.variance, &spec, self.seed_of(cell, index))?;
        let mut m = outcome_metrics(&s.outcome);
        let (checked, violations) = match s.envelope.as_ref().and_then(|e| e.dominated().map(|_| e)) {
            Some(e) => (1.0, e.violations.len() as f64),
            None => (0.0, 0.0),
        };
        m.push(("envelope_checked".into(), checked));
        m.push(("envelope_violations".into(), violations));
        Ok(m)
    }

    fn aggregate(&self, samples: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let mut rows = Vec::new();
        for (k, &f) in self.means.iter().enumerate() {
            let param = Self::param(f);
            let law = LawSpec::gaussian(f, self.variance);
            let c = lambda_condition(&law, self.lambda)?;
            rows.push(Row::aggregate(None, param.as_str(), "moment_lhs", c.lhs));
            rows.push(Row::aggregate(None, param.as_str(), "moment_rhs", c.rhs));
            rows.push(Row::aggregate(None, param.as_str(), "condition_satisfied", flag(c.satisfied)));
            rows.push(Row::aggregate(None, param.as_str(), "decay_ratio", c.ratio()));
            let search = find_lambda(&law)?;
            rows.push(Row::aggregate(None, param.as_str(), "lambda0", search.lambda0().unwrap_or(f64::NAN)));
            rows.push(Row::aggregate(None, param.as_str(), "best_lambda", search.best.lambda));
            rows.push(Row::aggregate(None, param.as_str(), "lambda_margin", search.margin()));
            rows.push(Row::aggregate(None, param.as_str(), "feasible", flag(search.feasible)));
            let lambda0 = search.lambda0().unwrap_or(0.0);
            let mut estimates = Vec::new();
            for (j, &l) in self.sizes.iter().enumerate() {
                let cell = &samples[k * self.sizes.len() + j];
                let e = blocking_estimate(BoxSpec::new(2, self.h, l, SOFT_A)?, cell);
                rows.extend(estimate_rows(l, &param, &e));
                let checked: f64 = cell.iter().map(|m| metric(m, "envelope_checked")).sum();
                let violations: f64 = cell.iter().map(|m| metric(m, "envelope_violations")).sum();
                rows.push(Row::aggregate(Some(l), param.as_str(), "envelope_checked", checked));
                rows.push(Row::aggregate(Some(l), param.as_str(), "envelope_violations", violations));
                let b = if self.deep_trap_samples > 0 {
                    deep_trap_check(&law, self.h, l, lambda0, self.deep_trap_samples, self.seed)?
                } else {
                    deep_trap_probability_bound(self.h, l, lambda0)
                };
                rows.push(Row::aggregate(Some(l), param.as_str(), "deep_trap_bound", b.bound));
                rows.push(Row::aggregate(Some(l), param.as_str(), "deep_trap_bound_vacuous", flag(b.vacuous)));
                if let Some(p) = b.empirical {
                    rows.push(
                        Row::aggregate(Some(l), param.as_str(), "deep_trap_frequency", p.estimate)
                            .with_uncertainty(p.std_err)
                            .with_n(p.trials),
                    );
                }
                estimates.push(e);
            }
            let strict = estimates.windows(2).all(|w| w[1].estimate() < w[0].estimate());
            let decay = summarize_decay(f, self.variance, estimates);
            rows.extend(fit_rows(&param, &decay.fit, strict));
            rows.push(Row::aggregate(None, param.as_str(), "consistent", flag(decay.consistent)));
        }
        Ok(rows)
    }
}

// ------------------------------------------------------------ mixing-check

pub struct MixingCheck {
    field: EnergyField<f64>,
    opts: MixingOptions<f64>,
}

impl MixingCheck {
    pub const KEYS: [&'static str; 9] = ["dim", "scale", "boxes", "n_samples", "distances", "test", "lo", "hi", "seed"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&keys(&Self::KEYS, true, false))?;
        let d = dim(cfg)?;
        let law = law_from(cfg, d, "moving-average")?;
        let scale: i64 = cfg.get_or("scale", 1)?;
        let test = match cfg.raw("test").unwrap_or("above-mean") {
            "above-mean" => TestFunction::AboveMean,
            "linear" => TestFunction::Linear {
                lo: cfg.get_or("lo", -1.0)?,
                hi: cfg.get_or("hi", 1.0)?,
            },
            other => bail!("unknown test `{other}`; expected above-mean or linear"),
        };
        let opts = MixingOptions {
            scale,
            boxes: cfg.get_or("boxes", 2)?,
            n_samples: cfg.get_or("n_samples", 4000)?,
            distances: cfg.list_or("distances", (1..=6).collect())?,
            test,
        };
        Ok(MixingCheck {
            field: EnergyField::new(d, law, cfg.get_or("seed", 0)?)?,
            opts,
        })
    }
}

impl Experiment for MixingCheck {
    fn cells(&self) -> Vec<Cell> {
        Vec::new()
    }

    fn seed_of(&self, _: usize, _: u64) -> u64 {
        self.field.seed()
    }

    fn run_sample(&self, _: usize, _: u64) -> Result<Metrics> {
        bail!("mixing-check has no per-sample tasks")
    }

    fn aggregate(&self, _: &[Vec<Metrics>]) -> Result<Vec<Row>> {
        let r = estimate_mixing_with(&self.field, &self.opts)?;
        let n = r.n_samples as u64;
        let mut rows = Vec::new();
        for p in &r.pair {
            let g = format!("gap={}", p.distance);
            rows.push(Row::aggregate(Some(r.scale), g.as_str(), "covariance", p.covariance).with_uncertainty(p.std_err).with_n(n));
            rows.push(Row::aggregate(Some(r.scale), g.as_str(), "z_score", p.z_score()).with_n(n));
        }
        for p in &r.product {
            let g = format!("gap={}", p.distance);
            rows.push(Row::aggregate(Some(r.scale), g.as_str(), "product_gap", p.gap).with_uncertainty(p.std_err).with_n(n));
        }
        rows.push(Row::aggregate(Some(r.scale), "", "alpha_hat", r.alpha_hat.unwrap_or(f64::NAN)));
        rows.push(Row::aggregate(Some(r.scale), "", "consistent_with_zero", flag(r.consistent_with_zero)));
        Ok(rows)
    }
}
