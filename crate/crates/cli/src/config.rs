//! Flat `key = value` scenario files.
//!
//! One key per line, `#` starts a comment, sections are key prefixes (`finite.`, `spectral.`,
//! `init.`, `integrator.`, `thresholds.`, `analyze.`). Lists are comma separated; matrix rows
//! and multiple initial points are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use unobs_stab::finite::{delta0_bound, FinitePlant};
use unobs_stab::linalg::{place_poles, GainMatrix, RMatrix};
use unobs_stab::observability::{choose_radii, impulse_l1, BoundParams, RadiiConstants};
use unobs_stab::sim::{IntegratorConfig, Method};
use unobs_stab::special::find_zeros;
use unobs_stab::spectral::{OutputKind, OutputSpec, SpectralParams};

pub const SEED_ENV: &str = "UNOBS_STAB_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Every problem found in a file, reported together.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn mentions(&self, text: &str) -> bool {
        self.0.iter().any(|e| e.message.contains(text) || e.key.contains(text))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteScenario {
    pub plant: FinitePlant,
    pub k: GainMatrix,
    pub delta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScenario {
    pub output: OutputSpec,
    pub params: SpectralParams,
    /// Radii certificate when `δ` and `Δ` came from the bound search.
    pub radii: Option<BoundParams>,
    pub constants: RadiiConstants,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Finite(FiniteScenario),
    Spectral(SpectralScenario),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Finite(_) => "finite",
            Self::Spectral(_) => "spectral",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditions {
    Explicit(Vec<(Vec<f64>, Vec<f64>)>),
    /// Uniform draws of `x0` and `x̂0` in origin-centred disks.
    Random {
        runs: usize,
        x_radius: f64,
        xhat_radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub x_max: f64,
    pub c_eps: Option<f64>,
    pub eps_decrease: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub trials: usize,
    pub u_grid: Vec<f64>,
    pub gramian_n: usize,
    pub gramian_mu: f64,
    pub gramian_horizon: f64,
    pub gramian_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub initial: InitialConditions,
    pub integrator: IntegratorConfig,
    pub thresholds: Thresholds,
    pub analysis: AnalysisConfig,
    pub warnings: Vec<String>,
}

const KNOWN_KEYS: &[&str] = &[
    "name",
    "seed",
    "strategy",
    "plant.a",
    "plant.b",
    "finite.k",
    "finite.poles",
    "finite.pole_scale",
    "finite.alpha",
    "finite.delta",
    "finite.delta_ratio",
    "finite.rho",
    "spectral.output",
    "spectral.series_orders",
    "spectral.series_re",
    "spectral.series_im",
    "spectral.mu",
    "spectral.alpha",
    "spectral.n",
    "spectral.j_factor",
    "spectral.k",
    "spectral.delta",
    "spectral.big_delta",
    "spectral.r0",
    "init.runs",
    "init.x_radius",
    "init.xhat_radius",
    "init.x0",
    "init.xhat0",
    "integrator.method",
    "integrator.step",
    "integrator.horizon",
    "integrator.record_every",
    "thresholds.x_max",
    "thresholds.c_eps",
    "thresholds.eps_decrease",
    "analyze.trials",
    "analyze.u_grid",
    "analyze.gramian_n",
    "analyze.gramian_mu",
    "analyze.gramian_horizon",
    "analyze.gramian_steps",
];

struct Entry {
    value: String,
    line: usize,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn parse(text: &str) -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
            errors: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                r.err(
                    &format!("line {}", i + 1),
                    format!("expected `key = value`, got `{line}`"),
                );
                continue;
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                r.err(&format!("line {}", i + 1), "empty key".into());
                continue;
            }
            if let Some(prev) = r.entries.get(&key) {
                let msg = format!("duplicate key (first set on line {})", prev.line);
                r.err(&key, msg);
                continue;
            }
            r.entries.insert(
                key,
                Entry {
                    value: v.trim().to_string(),
                    line: i + 1,
                },
            );
        }
        r
    }

    fn err(&mut self, key: &str, message: String) {
        self.errors.push(ConfigError {
            key: key.to_string(),
            message,
        });
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        Some(self.entries.get(key)?.value.clone())
    }

    fn typed<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let v = self.raw(key)?;
        let out = f(&v);
        if out.is_none() {
            self.err(key, format!("expected {what}, got `{v}`"));
        }
        out
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key)
    }

    fn real(&mut self, key: &str) -> Option<f64> {
        self.typed(key, "a finite real", |s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        })
    }

    fn int(&mut self, key: &str) -> Option<u64> {
        self.typed(key, "a non-negative integer", |s| s.parse::<u64>().ok())
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        self.typed(key, "true or false", |s| s.parse::<bool>().ok())
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.typed(key, "a comma-separated list of reals", parse_list)
    }

    fn rows(&mut self, key: &str) -> Option<Vec<Vec<f64>>> {
        self.typed(key, "`;`-separated rows of comma-separated reals", |s| {
            s.split(';').map(parse_list).collect()
        })
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.has(key) {
            self.err(key, "missing key".into());
        }
        v
    }

    fn positive(&mut self, key: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x <= 0.0 => {
                self.err(key, format!("must be positive, got {x}"));
                None
            }
            other => other,
        }
    }

    fn finish(mut self) -> Vec<ConfigError> {
        let unknown: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in unknown {
            self.err(&k, "unknown key".into());
        }
        self.errors
    }
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            key: path.display().to_string(),
            message: format!("cannot read file: {e}"),
        }])
    })?;
    let seed_override = std::env::var(SEED_ENV).ok();
    parse_config_str(&text, seed_override.as_deref())
}

pub fn parse_config_str(text: &str, seed_override: Option<&str>) -> Result<ScenarioConfig, ConfigErrors> {
    let mut r = Reader::parse(text);
    let mut warnings = Vec::new();

    let name = r.string("name").unwrap_or_else(|| "scenario".into());
    let mut seed = r.int("seed").unwrap_or(0);
    if let Some(s) = seed_override {
        match s.trim().parse::<u64>() {
            Ok(v) => seed = v,
            Err(_) => r.err(SEED_ENV, format!("expected a non-negative integer, got `{s}`")),
        }
    }

    let initial = read_initial(&mut r);
    let strategy_name = r.string("strategy");
    let strategy_name = r.required("strategy", strategy_name);
    let strategy = match strategy_name.as_deref() {
        Some("finite") => read_finite(&mut r, &initial, &mut warnings).map(Strategy::Finite),
        Some("spectral") => read_spectral(&mut r, &initial).map(Strategy::Spectral),
        Some(other) => {
            r.err("strategy", format!("expected `finite` or `spectral`, got `{other}`"));
            None
        }
        None => None,
    };

    let default_method = match strategy {
        Some(Strategy::Finite(_)) | None => Method::Rk4Coupled,
        Some(Strategy::Spectral(_)) => Method::ExactLinear,
    };
    let integrator = read_integrator(&mut r, default_method);
    if let (Some(Strategy::Finite(_)), Some(cfg)) = (&strategy, &integrator) {
        if cfg.method == Method::ExactLinear {
            r.err(
                "integrator.method",
                "exact_linear applies only to the spectral strategy".into(),
            );
        }
    }
    if let (Some(Strategy::Spectral(s)), Some(cfg)) = (&strategy, &integrator) {
        let ratio = s.params.big_delta / cfg.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            r.err(
                "integrator.step",
                format!("Delta / step = {ratio} must be a positive integer"),
            );
        }
    }

    let x_max = r.real("thresholds.x_max");
    let x_max = r.positive("thresholds.x_max", x_max).unwrap_or(1e-3);
    let c_eps = r.real("thresholds.c_eps");
    let c_eps = r.positive("thresholds.c_eps", c_eps);
    let eps_decrease = r.boolean("thresholds.eps_decrease").unwrap_or(true);

    let analysis = read_analysis(&mut r, strategy.as_ref());

    let errors = r.finish();
    match (errors.is_empty(), strategy, initial, integrator) {
        (true, Some(strategy), Some(initial), Some(integrator)) => Ok(ScenarioConfig {
            name,
            seed,
            strategy,
            initial,
            integrator,
            thresholds: Thresholds {
                x_max,
                c_eps,
                eps_decrease,
            },
            analysis,
            warnings,
        }),
        _ => Err(ConfigErrors(errors)),
    }
}

fn read_initial(r: &mut Reader) -> Option<InitialConditions> {
    if r.has("init.x0") || r.has("init.xhat0") {
        let x0 = r.rows("init.x0");
        let x0 = r.required("init.x0", x0);
        let xh = r.rows("init.xhat0");
        let xh = r.required("init.xhat0", xh);
        let (x0, xh) = (x0?, xh?);
        if x0.len() != xh.len() {
            r.err(
                "init.xhat0",
                format!("{} points given for {} in init.x0", xh.len(), x0.len()),
            );
            return None;
        }
        for key in ["init.runs", "init.x_radius", "init.xhat_radius"] {
            if r.has(key) {
                r.err(key, "cannot be combined with explicit init.x0".into());
            }
        }
        return Some(InitialConditions::Explicit(x0.into_iter().zip(xh).collect()));
    }
    let runs = r.int("init.runs").unwrap_or(1) as usize;
    if runs == 0 {
        r.err("init.runs", "must be at least 1".into());
    }
    let xr = r.real("init.x_radius");
    let xr = r.required("init.x_radius", xr);
    let xr = r.positive("init.x_radius", xr);
    let xh = r.real("init.xhat_radius");
    let xh = r.positive("init.xhat_radius", xh).or(xr);
    Some(InitialConditions::Random {
        runs: runs.max(1),
        x_radius: xr?,
        xhat_radius: xh?,
    })
}

fn initial_radius(init: &Option<InitialConditions>) -> Option<f64> {
    match init.as_ref()? {
        InitialConditions::Random {
            x_radius, xhat_radius, ..
        } => Some(x_radius.max(*xhat_radius)),
        InitialConditions::Explicit(pairs) => Some(
            pairs
                .iter()
                .flat_map(|(a, b)| [a, b])
                .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        ),
    }
}

fn read_plant(r: &mut Reader) -> Option<FinitePlant> {
    if !r.has("plant.a") && !r.has("plant.b") {
        return Some(FinitePlant::rotation());
    }
    let a = r.rows("plant.a");
    let a = r.required("plant.a", a);
    let b = r.list("plant.b");
    let b = r.required("plant.b", b);
    let (a, b) = (a?, b?);
    let m = match RMatrix::from_rows(&a) {
        Ok(m) => m,
        Err(e) => {
            r.err("plant.a", e.to_string());
            return None;
        }
    };
    match FinitePlant::new(m, b) {
        Ok(p) => Some(p),
        Err(e) => {
            r.err("plant.a", e.to_string());
            None
        }
    }
}

fn read_finite(r: &mut Reader, init: &Option<InitialConditions>, warnings: &mut Vec<String>) -> Option<FiniteScenario> {
    let plant = read_plant(r);
    let n = plant.as_ref().map_or(2, FinitePlant::dim);
    let scale = r.real("finite.pole_scale");
    let scale = r.positive("finite.pole_scale", scale).unwrap_or(1.0);
    let k = if r.has("finite.k") {
        let k = r.list("finite.k")?;
        if k.len() != n {
            r.err("finite.k", format!("expected {n} entries, got {}", k.len()));
            return None;
        }
        Some(GainMatrix::new(k))
    } else if r.has("finite.poles") {
        let poles = r.list("finite.poles")?;
        let poles: Vec<Complex64> = poles.iter().map(|&p| Complex64::new(scale * p, 0.0)).collect();
        let plant = plant.as_ref()?;
        match place_poles(plant.a(), plant.b(), &poles) {
            Ok(k) => Some(k),
            Err(e) => {
                r.err("finite.poles", e.to_string());
                None
            }
        }
    } else {
        match plant.as_ref()?.default_gain(scale) {
            Ok(k) => Some(k),
            Err(e) => {
                r.err("finite.pole_scale", e.to_string());
                None
            }
        }
    };
    let alpha = r.real("finite.alpha");
    let alpha = r.positive("finite.alpha", alpha).unwrap_or(10.0);
    let rho = r.real("finite.rho");
    let rho = match r.positive("finite.rho", rho) {
        Some(v) => Some(v),
        None if r.has("finite.rho") => None,
        None => match initial_radius(init) {
            Some(v) if v > 0.0 => Some(v),
            Some(_) => {
                r.err(
                    "finite.rho",
                    "initial conditions all sit at the origin; set finite.rho explicitly".into(),
                );
                None
            }
            None => None,
        },
    };
    let (plant, k, rho) = (plant?, k?, rho?);
    let delta0 = match delta0_bound(&k, rho, &plant) {
        Ok(d) => d,
        Err(e) => {
            r.err("finite.k", e.to_string());
            return None;
        }
    };
    let delta = match (r.has("finite.delta"), r.has("finite.delta_ratio")) {
        (true, true) => {
            r.err(
                "finite.delta_ratio",
                "give either finite.delta or finite.delta_ratio, not both".into(),
            );
            return None;
        }
        (true, false) => r.real("finite.delta")?,
        (false, _) => {
            let ratio = r.real("finite.delta_ratio");
            r.positive("finite.delta_ratio", ratio).unwrap_or(0.5) * delta0
        }
    };
    if delta < 0.0 {
        r.err("finite.delta", format!("must be non-negative, got {delta}"));
        return None;
    }
    if delta == 0.0 {
        warnings.push("delta = 0: the embedded observer is not observable; only analyze is meaningful".into());
    } else if delta >= delta0 {
        warnings.push(format!(
            "delta = {delta:.6e} is not below delta0 = {delta0:.6e} (rho = {rho}); the error dissipation premise does not hold"
        ));
    }
    Some(FiniteScenario {
        plant,
        k,
        delta,
        alpha,
        rho,
        delta0,
    })
}

fn read_output(r: &mut Reader, mu: f64) -> Option<OutputSpec> {
    let kind = r.string("spectral.output").unwrap_or_else(|| "norm_sq".into());
    let kind = match kind.as_str() {
        "norm_sq" => OutputKind::NormSq,
        "j0_radial" => OutputKind::J0Radial,
        "j2_cos2theta" => OutputKind::J2Cos2Theta,
        "norm" => OutputKind::Norm,
        "bessel_series" => {
            let orders = r.list("spectral.series_orders");
            let orders = r.required("spectral.series_orders", orders)?;
            let re = r.list("spectral.series_re");
            let re = r.required("spectral.series_re", re)?;
            let im = r.list("spectral.series_im").unwrap_or_else(|| vec![0.0; re.len()]);
            if orders.len() != re.len() || re.len() != im.len() || orders.iter().any(|o| o.fract() != 0.0) {
                r.err(
                    "spectral.series_orders",
                    "orders must be integers and match series_re/series_im in length".into(),
                );
                return None;
            }
            let coeffs = orders
                .iter()
                .zip(re.iter().zip(&im))
                .map(|(o, (a, b))| (*o as i32, Complex64::new(*a, *b)))
                .collect();
            return match OutputSpec::bessel_series(mu, coeffs) {
                Ok(s) => Some(s),
                Err(e) => {
                    r.err("spectral.series_orders", e.to_string());
                    None
                }
            };
        }
        other => {
            r.err(
                "spectral.output",
                format!("expected norm_sq, j0_radial, j2_cos2theta, norm or bessel_series, got `{other}`"),
            );
            return None;
        }
    };
    match OutputSpec::new(kind, mu) {
        Ok(s) => Some(s),
        Err(e) => {
            r.err("spectral.output", e.to_string());
            None
        }
    }
}

/// `κ = |K|`, `M = ∫|e^{s(A+bK)}b| ds` and `j` for the rotation plant.
pub fn spectral_constants(k: &GainMatrix, j: f64) -> Result<RadiiConstants, String> {
    let plant = FinitePlant::rotation();
    let m = impulse_l1(
        &k.closed_loop(plant.a(), plant.b()).map_err(|e| e.to_string())?,
        plant.b(),
    )
    .map_err(|e| e.to_string())?;
    Ok(RadiiConstants { kappa: k.norm(), m, j })
}

fn read_spectral(r: &mut Reader, init: &Option<InitialConditions>) -> Option<SpectralScenario> {
    let mu = r.real("spectral.mu");
    let mu = r.required("spectral.mu", mu);
    let mu = r.positive("spectral.mu", mu)?;
    let output = read_output(r, mu);
    let alpha = r.real("spectral.alpha");
    let alpha = r.positive("spectral.alpha", alpha).unwrap_or(1.0);
    let n = r.int("spectral.n").unwrap_or(24) as usize;
    let j_factor = r.real("spectral.j_factor").unwrap_or(0.9);
    let j = j_factor * find_zeros().j1;
    let k = r.list("spectral.k").unwrap_or_else(|| vec![0.0, -1.0]);
    if k.len() != 2 {
        r.err("spectral.k", format!("expected 2 entries, got {}", k.len()));
        return None;
    }
    let k = GainMatrix::new(k);
    let constants = match spectral_constants(&k, j) {
        Ok(c) => c,
        Err(e) => {
            r.err("spectral.k", e);
            return None;
        }
    };
    let explicit = r.has("spectral.delta") || r.has("spectral.big_delta");
    let (delta, big_delta, radii) = if explicit {
        let d = r.real("spectral.delta");
        let d = r.required("spectral.delta", d);
        let bd = r.real("spectral.big_delta");
        let bd = r.required("spectral.big_delta", bd);
        if r.has("spectral.r0") {
            r.err(
                "spectral.r0",
                "radii search conflicts with explicit spectral.delta / spectral.big_delta".into(),
            );
        }
        (d?, bd?, None)
    } else {
        let r0 = r.real("spectral.r0");
        let r0 = r.positive("spectral.r0", r0).or_else(|| initial_radius(init));
        let r0 = r.required("spectral.r0", r0)?;
        match choose_radii(r0, &constants, Some(mu)) {
            Ok(b) => (b.delta, b.big_delta, Some(b)),
            Err(e) => {
                r.err("spectral.r0", format!("cannot derive delta and Delta: {e}"));
                return None;
            }
        }
    };
    let params = SpectralParams {
        k,
        delta,
        alpha,
        big_delta,
        mu,
        j,
        n,
    };
    if let Err(e) = params.validate() {
        let key = if e.to_string().contains("Delta") {
            "spectral.big_delta"
        } else {
            "spectral"
        };
        r.err(key, e.to_string());
        return None;
    }
    Some(SpectralScenario {
        output: output?,
        params,
        radii,
        constants,
    })
}

fn read_integrator(r: &mut Reader, default_method: Method) -> Option<IntegratorConfig> {
    let method = match r.string("integrator.method").as_deref() {
        None => Some(default_method),
        Some("rk4_coupled") => Some(Method::Rk4Coupled),
        Some("exact_linear") => Some(Method::ExactLinear),
        Some(other) => {
            r.err(
                "integrator.method",
                format!("expected rk4_coupled or exact_linear, got `{other}`"),
            );
            None
        }
    };
    let step = r.real("integrator.step");
    let step = r.positive("integrator.step", step).unwrap_or(1e-3);
    let horizon = r.real("integrator.horizon");
    let horizon = r.required("integrator.horizon", horizon);
    let horizon = r.positive("integrator.horizon", horizon);
    let record_every = r.int("integrator.record_every").unwrap_or(100) as usize;
    if record_every == 0 {
        r.err("integrator.record_every", "must be at least 1".into());
        return None;
    }
    Some(IntegratorConfig {
        method: method?,
        step,
        horizon: horizon?,
        record_every,
    })
}

fn read_analysis(r: &mut Reader, strategy: Option<&Strategy>) -> AnalysisConfig {
    let mu_default = match strategy {
        Some(Strategy::Spectral(s)) => s.params.mu,
        _ => 1.0,
    };
    let trials = r.int("analyze.trials").unwrap_or(100) as usize;
    let u_grid = r
        .list("analyze.u_grid")
        .unwrap_or_else(|| (0..=5).map(|i| f64::from(i) * 0.1).collect());
    let gramian_n = r.int("analyze.gramian_n").unwrap_or(12) as usize;
    let gramian_mu = r.real("analyze.gramian_mu");
    let gramian_mu = r.positive("analyze.gramian_mu", gramian_mu).unwrap_or(mu_default);
    let gramian_horizon = r.real("analyze.gramian_horizon");
    let gramian_horizon = r
        .positive("analyze.gramian_horizon", gramian_horizon)
        .unwrap_or(2.0 * std::f64::consts::PI);
    let gramian_steps = r.int("analyze.gramian_steps").unwrap_or(2000) as usize;
    if gramian_steps < 100 {
        r.err(
            "analyze.gramian_steps",
            format!("must be at least 100, got {gramian_steps}"),
        );
    }
    AnalysisConfig {
        trials,
        u_grid,
        gramian_n,
        gramian_mu,
        gramian_horizon,
        gramian_steps,
    }
}
