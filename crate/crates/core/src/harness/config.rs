//! Experiment configuration and its flat `key = value` text form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::gmres::{GmresConfig, GmresPrecond};
use crate::omm::OmmConfig;
use crate::potential::{PotentialSpec, VacancyMode};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestId {
    /// Weak potential, `0.01 V₀`, every cell occupied.
    Test1,
    /// Full-strength potential with one vacant cell.
    Test2,
    /// `100 V₀` with a quarter of the cells vacant.
    Test3,
    /// Potential taken verbatim from the config.
    Custom,
}

impl TestId {
    pub fn index(self) -> u64 {
        match self {
            TestId::Test1 => 1,
            TestId::Test2 => 2,
            TestId::Test3 => 3,
            TestId::Custom => 0,
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestId::Test1 => "test1",
            TestId::Test2 => "test2",
            TestId::Test3 => "test3",
            TestId::Custom => "custom",
        })
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "test1" | "1" => Ok(TestId::Test1),
            "test2" | "2" => Ok(TestId::Test2),
            "test3" | "3" => Ok(TestId::Test3),
            "custom" => Ok(TestId::Custom),
            other => Err(Error::Config(format!("unknown test '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    None,
    Lap,
    Tpa,
    Gtpa(usize),
    Pp,
    Spp,
}

impl Method {
    pub fn is_projection(self) -> bool {
        matches!(self, Method::Pp | Method::Spp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => f.write_str("none"),
            Method::Lap => f.write_str("lap"),
            Method::Tpa => f.write_str("tpa"),
            Method::Gtpa(t) => write!(f, "gtpa({t})"),
            Method::Pp => f.write_str("pp"),
            Method::Spp => f.write_str("spp"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "none" => return Ok(Method::None),
            "lap" => return Ok(Method::Lap),
            "tpa" => return Ok(Method::Tpa),
            "gtpa" => return Ok(Method::Gtpa(5)),
            "pp" => return Ok(Method::Pp),
            "spp" => return Ok(Method::Spp),
            _ => {}
        }
        if let Some(t) = s.strip_prefix("gtpa(").and_then(|r| r.strip_suffix(')')) {
            let t = t.trim().parse().map_err(|_| Error::Config(format!("bad gtpa order in '{s}'")))?;
            return Ok(Method::Gtpa(t));
        }
        Err(Error::Config(format!("unknown method '{s}'")))
    }
}

/// How many states are occupied at a given lattice size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NRule {
    /// `OccupiedCells` for the weak-potential test, `EqualsEll` otherwise.
    ByTest,
    /// One state per non-vacant cell.
    OccupiedCells,
    EqualsEll,
    /// One entry per value in the `ℓ` list.
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub test: TestId,
    pub ells: Vec<usize>,
    pub pts_per_cell: usize,
    pub n_rule: NRule,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub pole_count: usize,
    /// Solver settings for PP; SPP uses the same settings with the
    /// sparsifying inner preconditioner.
    pub gmres: GmresConfig,
    pub omm: OmmConfig,
    /// Well shape and vacancy seed; scale and vacancies are overridden by the
    /// named tests.
    pub potential: PotentialSpec,
    /// Variance of the initial-guess noise relative to `max |X0|²`.
    pub noise: f64,
    pub oversample: usize,
    /// Apply PP/SPP through a precomputed `U U*`.
    pub precomputed: bool,
    pub half_width: usize,
    /// `σ = λ_n + shift_margin`.
    pub shift_margin: f64,
    pub output_path: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            test: TestId::Test1,
            ells: vec![3],
            pts_per_cell: 8,
            n_rule: NRule::ByTest,
            methods: vec![Method::Tpa, Method::Gtpa(5), Method::Pp],
            repeats: 5,
            seeds: Vec::new(),
            pole_count: 30,
            gmres: GmresConfig::default(),
            omm: OmmConfig::default(),
            potential: PotentialSpec::default(),
            noise: 0.1,
            oversample: 0,
            precomputed: true,
            half_width: 1,
            shift_margin: 1.0,
            output_path: None,
            trace_path: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    split_top_level(v)
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{}'", s.trim()))))
        .collect()
}

/// Splits on commas outside parentheses, so `gtpa(5)` stays whole.
fn split_top_level(v: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in v.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&v[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&v[start..]);
    out
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// A named test at the given lattice sizes with the default method set.
    pub fn for_test(test: TestId, ells: Vec<usize>) -> Self {
        let methods = match test {
            TestId::Test1 => vec![Method::Tpa, Method::Gtpa(5), Method::Pp],
            _ => vec![Method::Tpa, Method::Gtpa(5), Method::Spp],
        };
        Self { test, ells, methods, ..Default::default() }
    }

    /// Seeds in use: the explicit list, or `0..repeats`.
    pub fn effective_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ells.is_empty() || self.ells.contains(&0) {
            return Err(Error::Config("ell list must be nonempty and positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.repeats {
            return Err(Error::Config(format!("{} seeds given for {} repeats", self.seeds.len(), self.repeats)));
        }
        if let NRule::Explicit(v) = &self.n_rule {
            if v.len() != self.ells.len() {
                return Err(Error::Config("explicit N list must match the ell list".into()));
            }
        }
        if self.pts_per_cell == 0 {
            return Err(Error::Config("pts_per_cell must be positive".into()));
        }
        if self.pole_count < 2 || self.pole_count % 2 != 0 {
            return Err(Error::Config(format!("pole count {} must be even and at least 2", self.pole_count)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} must be nonnegative", self.noise)));
        }
        self.potential.validate()
    }

    /// Potential for this test: named tests fix the scale and vacancies.
    pub fn potential_spec(&self) -> PotentialSpec {
        let mut p = self.potential.clone();
        match self.test {
            TestId::Test1 => {
                p.global_scale = 0.01;
                p.vacancy_mode = VacancyMode::None;
            }
            TestId::Test2 => {
                p.global_scale = 1.0;
                p.vacancy_mode = VacancyMode::FixedCount(1);
            }
            TestId::Test3 => {
                p.global_scale = 100.0;
                p.vacancy_mode = VacancyMode::Fraction(0.25);
            }
            TestId::Custom => {}
        }
        p
    }

    /// Number of occupied states at the `i`-th lattice size.
    pub fn n_occ(&self, i: usize) -> Result<usize> {
        let ell = self.ells[i];
        let rule = match (&self.n_rule, self.test) {
            (NRule::ByTest, TestId::Test1) => &NRule::OccupiedCells,
            (NRule::ByTest, _) => &NRule::EqualsEll,
            (r, _) => r,
        };
        match rule {
            NRule::ByTest => unreachable!(),
            NRule::OccupiedCells => {
                let vac = self.potential_spec().vacancy_count(ell)?;
                let n = ell * ell - vac;
                if n == 0 {
                    return Err(Error::Config(format!("every cell is vacant at ell = {ell}")));
                }
                Ok(n)
            }
            NRule::EqualsEll => Ok(ell),
            NRule::Explicit(v) => Ok(v[i]),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults, except that a `test` line also resets the method set
    /// to that test's default when no `methods` line is present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut methods_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "test" => {
                    cfg.test = v.parse()?;
                    if !methods_set {
                        cfg.methods = Self::for_test(cfg.test, vec![]).methods;
                    }
                }
                "ell" | "ells" => cfg.ells = parse_list(key, v)?,
                "pts_per_cell" => cfg.pts_per_cell = parse_one(key, v)?,
                "n_rule" => {
                    cfg.n_rule = match v {
                        "by_test" => NRule::ByTest,
                        "occupied_cells" => NRule::OccupiedCells,
                        "equals_ell" => NRule::EqualsEll,
                        _ => NRule::Explicit(parse_list(key, v)?),
                    }
                }
                "methods" => {
                    cfg.methods = parse_list(key, v)?;
                    methods_set = true;
                }
                "repeats" => cfg.repeats = parse_one(key, v)?,
                "seeds" => cfg.seeds = parse_list(key, v)?,
                "poles" => cfg.pole_count = parse_one(key, v)?,
                "gmres_tol" => cfg.gmres.rel_tol = parse_one(key, v)?,
                "gmres_restart" => cfg.gmres.restart = parse_one(key, v)?,
                "gmres_max_restarts" => cfg.gmres.max_restarts = parse_one(key, v)?,
                "gmres_precond" => {
                    cfg.gmres.preconditioning = match v {
                        "none" => GmresPrecond::None,
                        "const_resolvent" => GmresPrecond::ConstResolvent,
                        "sparsifying" => GmresPrecond::Sparsifying,
                        _ => return Err(Error::Config(format!("gmres_precond: unknown '{v}'"))),
                    }
                }
                "omm_tol" => cfg.omm.tol = parse_one(key, v)?,
                "omm_max_iter" => cfg.omm.max_iter = parse_one(key, v)?,
                "omm_restart_every" => {
                    cfg.omm.restart_every = if v == "none" { None } else { Some(parse_one(key, v)?) }
                }
                "well_depth" => cfg.potential.well_depth = parse_one(key, v)?,
                "well_width" => cfg.potential.well_width = parse_one(key, v)?,
                "global_scale" => cfg.potential.global_scale = parse_one(key, v)?,
                "vacancies" => {
                    cfg.potential.vacancy_mode = if v == "none" {
                        VacancyMode::None
                    } else if let Some(c) = v.strip_prefix("count:") {
                        VacancyMode::FixedCount(parse_one(key, c.trim())?)
                    } else if let Some(f) = v.strip_prefix("fraction:") {
                        VacancyMode::Fraction(parse_one(key, f.trim())?)
                    } else {
                        return Err(Error::Config(format!("vacancies: expected none, count:k or fraction:f, got '{v}'")));
                    }
                }
                "potential_seed" => cfg.potential.rng_seed = parse_one(key, v)?,
                "noise" => cfg.noise = parse_one(key, v)?,
                "oversample" => cfg.oversample = parse_one(key, v)?,
                "projection" => {
                    cfg.precomputed = match v {
                        "precomputed" => true,
                        "on_the_fly" => false,
                        _ => return Err(Error::Config(format!("projection: unknown mode '{v}'"))),
                    }
                }
                "half_width" => cfg.half_width = parse_one(key, v)?,
                "shift_margin" => cfg.shift_margin = parse_one(key, v)?,
                "output" => cfg.output_path = Some(PathBuf::from(v)),
                "trace" => cfg.trace_path = Some(PathBuf::from(v)),
                _ => return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("test", self.test.to_string());
        kv("methods", join(&self.methods));
        kv("ell", join(&self.ells));
        kv("pts_per_cell", self.pts_per_cell.to_string());
        kv(
            "n_rule",
            match &self.n_rule {
                NRule::ByTest => "by_test".into(),
                NRule::OccupiedCells => "occupied_cells".into(),
                NRule::EqualsEll => "equals_ell".into(),
                NRule::Explicit(v) => join(v),
            },
        );
        kv("repeats", self.repeats.to_string());
        if !self.seeds.is_empty() {
            kv("seeds", join(&self.seeds));
        }
        kv("poles", self.pole_count.to_string());
        kv("gmres_tol", format!("{:e}", self.gmres.rel_tol));
        kv("gmres_restart", self.gmres.restart.to_string());
        kv("gmres_max_restarts", self.gmres.max_restarts.to_string());
        kv(
            "gmres_precond",
            match self.gmres.preconditioning {
                GmresPrecond::None => "none",
                GmresPrecond::ConstResolvent => "const_resolvent",
                GmresPrecond::Sparsifying => "sparsifying",
            }
            .into(),
        );
        kv("omm_tol", format!("{:e}", self.omm.tol));
        kv("omm_max_iter", self.omm.max_iter.to_string());
        kv("omm_restart_every", self.omm.restart_every.map_or("none".into(), |k| k.to_string()));
        kv("well_depth", format!("{:e}", self.potential.well_depth));
        kv("well_width", format!("{:e}", self.potential.well_width));
        kv("global_scale", format!("{:e}", self.potential.global_scale));
        kv(
            "vacancies",
            match self.potential.vacancy_mode {
                VacancyMode::None => "none".into(),
                VacancyMode::FixedCount(m) => format!("count:{m}"),
                VacancyMode::Fraction(f) => format!("fraction:{f:e}"),
            },
        );
        kv("potential_seed", self.potential.rng_seed.to_string());
        kv("noise", format!("{:e}", self.noise));
        kv("oversample", self.oversample.to_string());
        kv("projection", if self.precomputed { "precomputed" } else { "on_the_fly" }.into());
        kv("half_width", self.half_width.to_string());
        kv("shift_margin", format!("{:e}", self.shift_margin));
        if let Some(p) = &self.output_path {
            kv("output", p.display().to_string());
        }
        if let Some(p) = &self.trace_path {
            kv("trace", p.display().to_string());
        }
        s
    }
}
