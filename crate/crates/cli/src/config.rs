//! Sectioned key-value problem configuration.
//!
//! ```text
//! # comment
//! [grid]
//! nx = 33
//! [thickness]
//! g1 = 0.5
//! g2 = 0.5 + 0.25*x1
//! ```
//!
//! Keys are unique within a section. Expression values use the grammar of
//! [`fvk_core::Expr::parse`]. Every section except those a subcommand
//! requires may be omitted and is then filled with defaults.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use fvk_core::gamma::Quadrature;
use fvk_core::problem::{zero_matrix3, ExprMatrix3};
use fvk_core::solver::SolveConfig;
use fvk_core::{DisplacementExpr, Expr, Grid2D, GrowthTensor, LameMaterial, PlateProblem, ThicknessPair};

/// One problem in the configuration, tied to its line.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// All problems found while reading a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// An expression together with the text it was parsed from.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprEntry {
    pub text: String,
    pub expr: Expr,
}

impl ExprEntry {
    fn constant(text: &str) -> Self {
        Self {
            text: text.to_string(),
            expr: Expr::parse(text).expect("literal default parses"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            nx: 33,
            ny: 33,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> fvk_core::Result<Grid2D> {
        Grid2D::new(self.x_min, self.x_max, self.y_min, self.y_max, self.nx, self.ny)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialConfig {
    pub mu: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThicknessConfig {
    pub g1: ExprEntry,
    pub g2: ExprEntry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthConfig {
    pub eps: [[ExprEntry; 3]; 3],
    pub kappa: [[ExprEntry; 3]; 3],
}

impl Default for GrowthConfig {
    fn default() -> Self {
        let zero = || std::array::from_fn(|_| std::array::from_fn(|_| ExprEntry::constant("0")));
        Self {
            eps: zero(),
            kappa: zero(),
        }
    }
}

impl GrowthConfig {
    fn matrix(m: &[[ExprEntry; 3]; 3]) -> ExprMatrix3 {
        let mut out = zero_matrix3();
        for (r, row) in m.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                out[r][c] = e.expr.clone();
            }
        }
        out
    }

    pub fn build(&self) -> GrowthTensor {
        GrowthTensor::new(Self::matrix(&self.eps), Self::matrix(&self.kappa))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaConfig {
    pub h_list: Vec<f64>,
    pub quadrature: Quadrature,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self {
            h_list: vec![0.08, 0.04, 0.02, 0.01],
            quadrature: Quadrature::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementConfig {
    pub w1: ExprEntry,
    pub w2: ExprEntry,
    pub v: ExprEntry,
}

impl DisplacementConfig {
    pub fn build(&self) -> DisplacementExpr {
        DisplacementExpr {
            w: [self.w1.expr.clone(), self.w2.expr.clone()],
            v: self.v.expr.clone(),
        }
    }
}

impl Default for DisplacementConfig {
    fn default() -> Self {
        Self {
            w1: ExprEntry::constant("0"),
            w2: ExprEntry::constant("0"),
            v: ExprEntry::constant("0"),
        }
    }
}

/// Nodal displacement read from a field CSV instead of expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualConfig {
    pub fields: PathBuf,
}

/// A fully parsed and validated configuration. Sections that were absent
/// and have no default are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub grid: Option<GridConfig>,
    pub material: Option<MaterialConfig>,
    pub thickness: Option<ThicknessConfig>,
    pub growth: GrowthConfig,
    pub solver: SolveConfig,
    pub gamma: GammaConfig,
    pub displacement: Option<DisplacementConfig>,
    pub residual: Option<ResidualConfig>,
    /// Set when every growth entry is the constant zero.
    pub zero_growth: bool,
}

const GROWTH_KEYS: [&str; 9] = ["11", "12", "13", "21", "22", "23", "31", "32", "33"];

fn section_keys(section: &str) -> Option<Vec<String>> {
    let fixed = |keys: &[&str]| Some(keys.iter().map(|k| k.to_string()).collect());
    match section {
        "grid" => fixed(&["x_min", "x_max", "y_min", "y_max", "nx", "ny"]),
        "material" => fixed(&["mu", "lambda"]),
        "thickness" => fixed(&["g1", "g2"]),
        "growth" => Some(
            ["eps", "kappa"]
                .iter()
                .flat_map(|p| GROWTH_KEYS.iter().map(move |k| format!("{p}_{k}")))
                .collect(),
        ),
        "solver" => fixed(&[
            "max_iters",
            "grad_tol",
            "memory",
            "armijo",
            "backtrack",
            "max_backtracks",
            "seed",
            "init_amplitude",
            "precond_shift",
            "n_tests",
        ]),
        "gamma" => fixed(&["h_list", "n_inplane", "n_thickness"]),
        "displacement" => fixed(&["w1", "w2", "v"]),
        "residual" => fixed(&["fields"]),
        _ => None,
    }
}

type Section = BTreeMap<String, (usize, String)>;

/// Splits the text into sections of `key -> (line, value)`.
fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> BTreeMap<String, (usize, Section)> {
    let mut sections: BTreeMap<String, (usize, Section)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                errors.push(ConfigError {
                    line,
                    message: format!("malformed section header `{body}`"),
                });
                current = None;
                continue;
            };
            let name = name.trim().to_ascii_lowercase();
            if section_keys(&name).is_none() {
                errors.push(ConfigError {
                    line,
                    message: format!("unknown section [{name}]"),
                });
                current = None;
            } else if sections.contains_key(&name) {
                errors.push(ConfigError {
                    line,
                    message: format!("duplicate section [{name}]"),
                });
                current = None;
            } else {
                sections.insert(name.clone(), (line, Section::new()));
                current = Some(name);
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(ConfigError {
                line,
                message: format!("expected `key = value`, found `{body}`"),
            });
            continue;
        };
        let (key, value) = (key.trim().to_ascii_lowercase(), value.trim().to_string());
        let Some(name) = &current else {
            errors.push(ConfigError {
                line,
                message: format!("key `{key}` outside of a known section"),
            });
            continue;
        };
        let allowed = section_keys(name).unwrap_or_default();
        if !allowed.contains(&key) {
            errors.push(ConfigError {
                line,
                message: format!("unknown key `{key}` in [{name}]"),
            });
            continue;
        }
        let section = &mut sections.get_mut(name).expect("current section exists").1;
        if let Some((first, _)) = section.get(&key) {
            errors.push(ConfigError {
                line,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
            continue;
        }
        section.insert(key, (line, value));
    }
    sections
}

struct Reader<'a> {
    errors: &'a mut Vec<ConfigError>,
}

impl Reader<'_> {
    fn number<T: std::str::FromStr>(&mut self, s: &Section, key: &str, default: T) -> T {
        match s.get(key) {
            None => default,
            Some((line, v)) => v.parse().unwrap_or_else(|_| {
                self.errors.push(ConfigError {
                    line: *line,
                    message: format!("`{key}` expects a number, found `{v}`"),
                });
                default
            }),
        }
    }

    fn expr(&mut self, s: &Section, key: &str, default: Option<&str>, section_line: usize) -> Option<ExprEntry> {
        let (line, text) = match (s.get(key), default) {
            (Some((line, v)), _) => (*line, v.clone()),
            (None, Some(d)) => return Some(ExprEntry::constant(d)),
            (None, None) => {
                self.errors.push(ConfigError {
                    line: section_line,
                    message: format!("missing required key `{key}`"),
                });
                return None;
            }
        };
        match Expr::parse(&text) {
            Ok(expr) => Some(ExprEntry { text, expr }),
            Err(e) => {
                self.errors.push(ConfigError {
                    line,
                    message: format!("cannot parse `{key}` = `{text}`: {e}"),
                });
                None
            }
        }
    }

    fn check(&mut self, ok: bool, s: &Section, key: &str, section_line: usize, message: impl Into<String>) {
        if !ok {
            let line = s.get(key).map_or(section_line, |(l, _)| *l);
            self.errors.push(ConfigError {
                line,
                message: message.into(),
            });
        }
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let sections = tokenize(text, &mut errors);
    let empty = (0usize, Section::new());
    let get = |name: &str| sections.get(name);
    let mut rd = Reader { errors: &mut errors };

    let grid = get("grid").map(|(at, s)| {
        let d = GridConfig::default();
        let g = GridConfig {
            x_min: rd.number(s, "x_min", d.x_min),
            x_max: rd.number(s, "x_max", d.x_max),
            y_min: rd.number(s, "y_min", d.y_min),
            y_max: rd.number(s, "y_max", d.y_max),
            nx: rd.number(s, "nx", d.nx),
            ny: rd.number(s, "ny", d.ny),
        };
        if let Err(e) = g.build() {
            rd.errors.push(ConfigError {
                line: *at,
                message: e.to_string(),
            });
        }
        g
    });

    let material = get("material").map(|(at, s)| {
        let m = MaterialConfig {
            mu: rd.number(s, "mu", 1.0),
            lambda: rd.number(s, "lambda", 1.0),
        };
        if let Err(e) = LameMaterial::new(m.mu, m.lambda) {
            rd.errors.push(ConfigError {
                line: *at,
                message: e.to_string(),
            });
        }
        m
    });

    let thickness = get("thickness").and_then(|(at, s)| {
        let g1 = rd.expr(s, "g1", None, *at);
        let g2 = rd.expr(s, "g2", None, *at);
        let (g1, g2) = (g1?, g2?);
        let built = ThicknessPair::new(g1.expr.clone(), g2.expr.clone());
        if let Some(Ok(grid)) = grid.map(|g| g.build()) {
            if let Err(e) = built.validate(&grid) {
                let key = if matches!(e, fvk_core::Error::NonPositiveThickness { name: "g1", .. }) {
                    "g1"
                } else {
                    "g2"
                };
                rd.check(false, s, key, *at, e.to_string());
            }
        }
        Some(ThicknessConfig { g1, g2 })
    });

    let growth = {
        let (at, s) = get("growth").unwrap_or(&empty);
        let mut entry = |prefix: &str, k: usize| {
            rd.expr(s, &format!("{prefix}_{}", GROWTH_KEYS[k]), Some("0"), *at)
                .unwrap_or_else(|| ExprEntry::constant("0"))
        };
        let mut block = |prefix: &str| -> [[ExprEntry; 3]; 3] {
            let flat: Vec<ExprEntry> = (0..9).map(|k| entry(prefix, k)).collect();
            std::array::from_fn(|r| std::array::from_fn(|c| flat[3 * r + c].clone()))
        };
        GrowthConfig {
            eps: block("eps"),
            kappa: block("kappa"),
        }
    };

    let solver = {
        let (at, s) = get("solver").unwrap_or(&empty);
        let d = SolveConfig::default();
        let cfg = SolveConfig {
            max_iters: rd.number(s, "max_iters", d.max_iters),
            grad_tol: rd.number(s, "grad_tol", d.grad_tol),
            memory: rd.number(s, "memory", d.memory),
            armijo: rd.number(s, "armijo", d.armijo),
            backtrack: rd.number(s, "backtrack", d.backtrack),
            max_backtracks: rd.number(s, "max_backtracks", d.max_backtracks),
            seed: rd.number(s, "seed", d.seed),
            init_amplitude: rd.number(s, "init_amplitude", d.init_amplitude),
            precond_shift: rd.number(s, "precond_shift", d.precond_shift),
            n_tests: rd.number(s, "n_tests", d.n_tests),
        };
        if let Err(e) = cfg.validate() {
            rd.errors.push(ConfigError {
                line: *at,
                message: e.to_string(),
            });
        }
        cfg
    };

    let gamma = {
        let (at, s) = get("gamma").unwrap_or(&empty);
        let d = GammaConfig::default();
        let h_list = match s.get("h_list") {
            None => d.h_list,
            Some((line, v)) => {
                let parsed: Result<Vec<f64>, _> = v.split(',').map(|x| x.trim().parse::<f64>()).collect();
                match parsed {
                    Ok(h) => h,
                    Err(_) => {
                        rd.errors.push(ConfigError {
                            line: *line,
                            message: format!("`h_list` expects comma-separated numbers, found `{v}`"),
                        });
                        d.h_list
                    }
                }
            }
        };
        let quadrature = Quadrature {
            n_inplane: rd.number(s, "n_inplane", d.quadrature.n_inplane),
            n_thickness: rd.number(s, "n_thickness", d.quadrature.n_thickness),
        };
        let decreasing = h_list.len() >= 2 && h_list.iter().all(|h| *h > 0.0) && h_list.windows(2).all(|w| w[1] < w[0]);
        rd.check(
            decreasing,
            s,
            "h_list",
            *at,
            "`h_list` needs at least two positive, strictly decreasing values",
        );
        rd.check(
            quadrature.n_inplane >= 2,
            s,
            "n_inplane",
            *at,
            "`n_inplane` must be at least 2",
        );
        rd.check(
            quadrature.n_thickness >= 2,
            s,
            "n_thickness",
            *at,
            "`n_thickness` must be at least 2",
        );
        GammaConfig { h_list, quadrature }
    };

    let displacement = get("displacement").map(|(at, s)| {
        let mut e = |k: &str| {
            rd.expr(s, k, Some("0"), *at)
                .unwrap_or_else(|| ExprEntry::constant("0"))
        };
        DisplacementConfig {
            w1: e("w1"),
            w2: e("w2"),
            v: e("v"),
        }
    });

    let residual = get("residual").and_then(|(at, s)| match s.get("fields") {
        Some((_, v)) => Some(ResidualConfig {
            fields: PathBuf::from(v),
        }),
        None => {
            rd.errors.push(ConfigError {
                line: *at,
                message: "missing required key `fields`".into(),
            });
            None
        }
    });

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(ConfigErrors(errors));
    }
    let zero_growth = growth.build().is_zero();
    Ok(ProblemConfig {
        grid,
        material,
        thickness,
        growth,
        solver,
        gamma,
        displacement,
        residual,
        zero_growth,
    })
}

impl ProblemConfig {
    /// Error for a subcommand that needs a section that is absent.
    fn missing(section: &str) -> ConfigErrors {
        ConfigErrors(vec![ConfigError {
            line: 0,
            message: format!("missing required section [{section}]"),
        }])
    }

    pub fn require_grid(&self) -> Result<Grid2D, ConfigErrors> {
        let g = self.grid.ok_or_else(|| Self::missing("grid"))?;
        g.build().map_err(|e| {
            ConfigErrors(vec![ConfigError {
                line: 0,
                message: e.to_string(),
            }])
        })
    }

    pub fn require_material(&self) -> Result<LameMaterial, ConfigErrors> {
        let m = self.material.ok_or_else(|| Self::missing("material"))?;
        LameMaterial::new(m.mu, m.lambda).map_err(|e| {
            ConfigErrors(vec![ConfigError {
                line: 0,
                message: e.to_string(),
            }])
        })
    }

    pub fn require_thickness(&self) -> Result<ThicknessPair, ConfigErrors> {
        let t = self.thickness.as_ref().ok_or_else(|| Self::missing("thickness"))?;
        Ok(ThicknessPair::new(t.g1.expr.clone(), t.g2.expr.clone()))
    }

    /// Grid, material, thickness and growth assembled into a problem.
    pub fn problem(&self) -> Result<PlateProblem, crate::CliError> {
        let grid = self.require_grid()?;
        let material = self.require_material()?;
        let thickness = self.require_thickness()?;
        Ok(PlateProblem::new(grid, material, thickness, self.growth.build())?)
    }

    /// The configuration with every default written out.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        if let Some(g) = &self.grid {
            let _ = writeln!(
                out,
                "[grid]\nx_min = {}\nx_max = {}\ny_min = {}\ny_max = {}\nnx = {}\nny = {}\n",
                g.x_min, g.x_max, g.y_min, g.y_max, g.nx, g.ny
            );
        }
        if let Some(m) = &self.material {
            let _ = writeln!(out, "[material]\nmu = {}\nlambda = {}\n", m.mu, m.lambda);
        }
        if let Some(t) = &self.thickness {
            let _ = writeln!(out, "[thickness]\ng1 = {}\ng2 = {}\n", t.g1.text, t.g2.text);
        }
        out.push_str("[growth]\n");
        for (prefix, m) in [("eps", &self.growth.eps), ("kappa", &self.growth.kappa)] {
            for (k, key) in GROWTH_KEYS.iter().enumerate() {
                let _ = writeln!(out, "{prefix}_{key} = {}", m[k / 3][k % 3].text);
            }
        }
        let s = &self.solver;
        let _ = writeln!(
            out,
            "\n[solver]\nmax_iters = {}\ngrad_tol = {:e}\nmemory = {}\narmijo = {:e}\nbacktrack = {}\nmax_backtracks = {}\nseed = {}\ninit_amplitude = {:e}\nprecond_shift = {:e}\nn_tests = {}\n",
            s.max_iters, s.grad_tol, s.memory, s.armijo, s.backtrack, s.max_backtracks, s.seed, s.init_amplitude, s.precond_shift, s.n_tests
        );
        let h: Vec<String> = self.gamma.h_list.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(
            out,
            "[gamma]\nh_list = {}\nn_inplane = {}\nn_thickness = {}\n",
            h.join(", "),
            self.gamma.quadrature.n_inplane,
            self.gamma.quadrature.n_thickness
        );
        if let Some(d) = &self.displacement {
            let _ = writeln!(
                out,
                "[displacement]\nw1 = {}\nw2 = {}\nv = {}\n",
                d.w1.text, d.w2.text, d.v.text
            );
        }
        if let Some(r) = &self.residual {
            let _ = writeln!(out, "[residual]\nfields = {}\n", r.fields.display());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[grid]
nx = 9
ny = 9
[material]
mu = 1
lambda = 1
[thickness]
g1 = 0.5
g2 = 0.5
";

    #[test]
    fn minimal_config_parses() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.zero_growth);
        assert_eq!(c.grid.unwrap().nx, 9);
        assert_eq!(c.solver, SolveConfig::default());
        assert!(c.problem().is_ok());
    }

    #[test]
    fn negative_thickness_is_rejected() {
        let text = MINIMAL.replace("g1 = 0.5", "g1 = -0.1");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 9);
        assert!(err.to_string().contains("thickness must be positive"), "{err}");
    }

    #[test]
    fn expressions_differentiate() {
        let text = format!("{MINIMAL}[displacement]\nv = x1^2 + sin(x2)\n");
        let c = parse_config(&text).unwrap();
        let v = c.displacement.unwrap().v.expr;
        assert_eq!(v.d1().to_string(), "2*x1");
        assert!(!c.zero_growth || c.growth.build().is_zero());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[grid]\nnx = nine\nfoo = 1\n[bogus]\n[growth]\neps_11 = sin(\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 6]);
        assert!(err.to_string().contains("unknown key `foo`"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("[material]\nmu = 1\nmu = 2\n").unwrap_err();
        assert!(err.0[0].message.contains("duplicate key"));
    }

    #[test]
    fn resolved_echo_reparses_to_the_same_config() {
        let text = format!("{MINIMAL}[growth]\nkappa_11 = 1 + x2\n[solver]\ngrad_tol = 3e-7\nseed = 5\n");
        let c = parse_config(&text).unwrap();
        let again = parse_config(&c.to_ini()).unwrap();
        assert_eq!(c, again);
        assert!(!again.zero_growth);
    }
}
