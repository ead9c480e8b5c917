//! Problem instances: the JSON configuration schema, validation and the
//! resolved [`Scenario`] shared by every solver.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::laws::{DiffusionLaw, NonlocalLaw};
use crate::quadrature::Interval;

/// Control and observation regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regions {
    #[serde(rename = "O")]
    pub o: Interval,
    #[serde(rename = "O1")]
    pub o1: Interval,
    #[serde(rename = "O2")]
    pub o2: Interval,
    #[serde(rename = "Od")]
    pub od: Interval,
}

/// Initial datum families. All of them vanish at both end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum InitialDatum {
    Zero,
    /// `amplitude * sin(mode * pi * x)`.
    Sine {
        amplitude: f64,
        mode: u32,
    },
    /// `amplitude * x * (1 - x)`.
    Poly {
        amplitude: f64,
    },
    /// Smooth compactly supported bump centred at `center` with half width `width`.
    Bump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl InitialDatum {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Sine { amplitude, mode } => amplitude * (mode as f64 * std::f64::consts::PI * x).sin(),
            InitialDatum::Poly { amplitude } => amplitude * x * (1.0 - x),
            InitialDatum::Bump { amplitude, center, width } => {
                let r = (x - center) / width;
                if r.abs() < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn sample(&self, grid: &Grid) -> Vec<f64> {
        let mut y0: Vec<f64> = grid.nodes().iter().map(|&x| self.eval(x)).collect();
        y0[0] = 0.0;
        y0[grid.n_interior + 1] = 0.0;
        y0
    }

    /// Returns the same family with the amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> InitialDatum {
        match *self {
            InitialDatum::Zero => InitialDatum::Zero,
            InitialDatum::Sine { amplitude, mode } => InitialDatum::Sine { amplitude: c * amplitude, mode },
            InitialDatum::Poly { amplitude } => InitialDatum::Poly { amplitude: c * amplitude },
            InitialDatum::Bump { amplitude, center, width } => {
                InitialDatum::Bump { amplitude: c * amplitude, center, width }
            }
        }
    }
}

/// Follower targets. Only their values on `O_d` are ever read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum TargetSpec {
    #[default]
    Zero,
    /// `y_{i,d}(x,t) = amplitude[i] * sin(mode*pi*x) * (1 - t/t_off)^2` for
    /// `t < t_off` and zero afterwards.
    Separable { amplitude: [f64; 2], mode: u32, t_off: f64 },
}

impl TargetSpec {
    fn sample(&self, grid: &Grid, i: usize) -> SpaceTimeField {
        match *self {
            TargetSpec::Zero => SpaceTimeField::zeros(grid),
            TargetSpec::Separable { amplitude, mode, t_off } => SpaceTimeField::from_fn(grid, |t, x| {
                if t < t_off {
                    let c = 1.0 - t / t_off;
                    amplitude[i] * (mode as f64 * std::f64::consts::PI * x).sin() * c * c
                } else {
                    0.0
                }
            }),
        }
    }
}

/// Carleman parameters. Unset entries are filled with documented defaults
/// when the scenario is resolved (`lambda` when the weights are built).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CarlemanConfig {
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alpha_prime: Option<f64>,
    #[serde(default)]
    pub beta_prime: Option<f64>,
    #[serde(default)]
    pub m0: Option<f64>,
}

/// Numerical tolerances and iteration budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relaxation factor of the follower fixed point.
    pub damping: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Null-control tolerance relative to `||y0||_{L^2}`.
    pub null_tol: f64,
    /// Outer tolerance relative to the weighted size of the data.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.7,
            fp_tol: 1e-9,
            fp_max_iter: 200,
            picard_tol: 1e-11,
            picard_max_iter: 50,
            cg_tol: 1e-10,
            cg_max_iter: 50_000,
            null_tol: 1e-6,
            outer_tol: 1e-8,
            outer_max_iter: 40,
        }
    }
}

fn default_seed() -> u64 {
    42
}

/// JSON scenario schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_interior: usize,
    pub m_steps: usize,
    pub gamma: f64,
    pub ell: NonlocalLaw,
    pub regions: Regions,
    pub alpha: [f64; 2],
    pub mu: [f64; 2],
    pub y0: InitialDatum,
    #[serde(default)]
    pub targets: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial_dim: Option<usize>,
    #[serde(default)]
    pub carleman: CarlemanConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ScenarioConfig {
    /// Small-data reference problem: `a = x^0.5`, `T = 0.5`, `O = (0.3,0.8)`,
    /// `O_d = (0.5,0.7)`, `y0 = 0.01 sin(pi x)`, `l(s) = 1 + 0.5 atan(s)`.
    pub fn reference() -> Self {
        Self {
            t_final: 0.5,
            n_interior: 49,
            m_steps: 100,
            gamma: 0.5,
            ell: NonlocalLaw::Atan { c0: 1.0, c1: 0.5 },
            regions: Regions {
                o: Interval::new(0.3, 0.8),
                o1: Interval::new(0.1, 0.4),
                o2: Interval::new(0.6, 0.9),
                od: Interval::new(0.5, 0.7),
            },
            alpha: [1.0, 1.0],
            mu: [2.0, 2.0],
            y0: InitialDatum::Sine { amplitude: 1e-2, mode: 1 },
            targets: TargetSpec::Zero,
            radial_dim: None,
            carleman: CarlemanConfig::default(),
            solver: SolverConfig::default(),
            seed: default_seed(),
        }
    }

    /// Fills every optional Carleman entry except `lambda`.
    pub fn with_carleman_defaults(mut self) -> Self {
        let o = self.regions.o;
        let c = &mut self.carleman;
        c.alpha_prime.get_or_insert(o.lo + o.len() / 8.0);
        c.beta_prime.get_or_insert(o.hi - o.len() / 8.0);
        c.m0.get_or_insert(self.t_final.powi(8) / 16.0);
        self
    }

    /// Every violated rule, named.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut rule = |ok: bool, name: &str| {
            if !ok {
                v.push(name.to_string());
            }
        };
        rule(self.t_final.is_finite() && self.t_final > 0.0, "T > 0");
        rule(self.n_interior >= 3, "n_interior >= 3");
        rule(self.m_steps >= 2, "m_steps >= 2");
        rule((0.0..1.0).contains(&self.gamma), "K in [0,1)");
        let r = &self.regions;
        for (name, i) in [("O", r.o), ("O1", r.o1), ("O2", r.o2), ("Od", r.od)] {
            rule(i.is_valid_subinterval(), &format!("{name} is an open subinterval of (0,1)"));
        }
        rule(r.od.intersects(&r.o), "O_d ∩ O nonempty");
        rule(self.mu.iter().all(|&m| m.is_finite() && m > 0.0), "mu_i > 0");
        rule(self.alpha.iter().all(|&a| a.is_finite() && a >= 0.0), "alpha_i >= 0");
        rule(self.ell.bound_l0() > 0.0, "ell(0) > 0");
        if let NonlocalLaw::Logistic { k, .. } = self.ell {
            rule(k.is_finite(), "logistic rate finite");
        }
        match self.y0 {
            InitialDatum::Bump { center, width, .. } => {
                rule(width > 0.0 && center - width >= 0.0 && center + width <= 1.0, "y0 vanishes at both endpoints")
            }
            InitialDatum::Sine { mode, .. } => rule(mode >= 1, "y0 vanishes at both endpoints"),
            _ => {}
        }
        if let TargetSpec::Separable { t_off, .. } = self.targets {
            rule(t_off > 0.0, "target cutoff t_off > 0");
        }
        if let Some(n) = self.radial_dim {
            rule(n >= 1, "radial_dim >= 1");
        }
        let c = self.carleman;
        if let (Some(a), Some(b)) = (c.alpha_prime, c.beta_prime) {
            rule(
                0.0 < a && a < b && b < 1.0 && Interval::new(a, b).is_compactly_inside(&r.o),
                "0 < alpha' < beta' < 1 and (alpha',beta') compactly inside O",
            );
        }
        if let Some(m0) = c.m0 {
            rule(m0 >= (self.t_final / 2.0).powi(4) * self.t_final.powi(4), "m0 >= (T/2)^4 T^4");
        }
        if let Some(s) = c.s {
            rule(s.is_finite() && s > 0.0, "s > 0");
        }
        if let Some(l) = c.lambda {
            rule(l.is_finite() && l > 0.0, "lambda > 0");
        }
        let s = &self.solver;
        rule(s.damping > 0.0 && s.damping <= 1.0, "damping in (0,1]");
        rule(s.cg_tol > 0.0 && s.fp_tol > 0.0 && s.picard_tol > 0.0 && s.outer_tol > 0.0, "tolerances > 0");
        rule(s.null_tol >= 0.0, "null_tol >= 0");
        v
    }
}

/// Sampled nodal masks of the four regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub o: Vec<f64>,
    pub o1: Vec<f64>,
    pub o2: Vec<f64>,
    pub od: Vec<f64>,
}

impl Masks {
    /// Mask of follower `i` (0 or 1).
    pub fn follower(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.o1
        } else {
            &self.o2
        }
    }
}

/// Validated problem instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub a_law: DiffusionLaw,
    pub l_law: NonlocalLaw,
    pub masks: Masks,
    pub alpha: [f64; 2],
    pub mu: [f64; 2],
    pub y0: Vec<f64>,
    /// Targets on the full grid; solvers mask them with `O_d`.
    pub targets: [SpaceTimeField; 2],
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let config = config.with_carleman_defaults();
        let problems = config.violations();
        if !problems.is_empty() {
            return Err(Error::InvalidScenario(problems));
        }
        let grid = Grid::new(config.t_final, config.n_interior, config.m_steps)?;
        let r = config.regions;
        let masks = Masks { o: r.o.mask(&grid), o1: r.o1.mask(&grid), o2: r.o2.mask(&grid), od: r.od.mask(&grid) };
        Ok(Self {
            a_law: DiffusionLaw::power(config.gamma),
            l_law: config.ell,
            alpha: config.alpha,
            mu: config.mu,
            y0: config.y0.sample(&grid),
            targets: [config.targets.sample(&grid, 0), config.targets.sample(&grid, 1)],
            masks,
            grid,
            config,
        })
    }

    /// Same problem sampled on another grid.
    pub fn resampled(&self, n_interior: usize, m_steps: usize) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.n_interior = n_interior;
        cfg.m_steps = m_steps;
        Scenario::from_config(cfg)
    }

    /// Same problem with a modified configuration.
    pub fn with(&self, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Self> {
        let mut cfg = self.config.clone();
        edit(&mut cfg);
        Scenario::from_config(cfg)
    }

    pub fn radial_dim(&self) -> Option<usize> {
        self.config.radial_dim
    }

    /// `alpha_i * 1_{O_d} * y_{i,d}` on the full grid.
    pub fn weighted_target(&self, i: usize) -> SpaceTimeField {
        self.targets[i].masked(&self.masks.od).scaled(self.alpha[i])
    }

    pub fn targets_vanish(&self) -> bool {
        self.targets.iter().all(|t| t.is_zero())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let cfg: ScenarioConfig = serde_json::from_str(&text)?;
    Scenario::from_config(cfg)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&scenario.config)?;
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}
