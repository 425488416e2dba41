//! Flat `key=value` experiment configuration. Repeating a list key appends;
//! the first occurrence replaces the experiment's default list.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sms_core::fem::SupgOptions;
use sms_core::layers::SnapRule;
use sms_core::mesh::Diagonal;
use sms_core::solvers::Method;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` cannot take `{value}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("no experiment given")]
    MissingExperiment,
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("method {method} needs eps > 0, got eps = {eps}")]
    MethodMismatch { method: Method, eps: f64 },
    #[error("fixture {0} does not exist")]
    FixtureMissing(PathBuf),
    #[error("tuned crosswind values exist only for N in {{10, 20, 40}}, got N = {0}; set crosswind and multiplier instead")]
    UntunedN(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    Fig1,
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
    Ex7,
    CompEx2,
    CompEx3,
    CompEx4,
    CompEx5,
    CompEx6,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 13] = [
        ExperimentId::Fig1,
        ExperimentId::Ex1,
        ExperimentId::Ex2,
        ExperimentId::Ex3,
        ExperimentId::Ex4,
        ExperimentId::Ex5,
        ExperimentId::Ex6,
        ExperimentId::Ex7,
        ExperimentId::CompEx2,
        ExperimentId::CompEx3,
        ExperimentId::CompEx4,
        ExperimentId::CompEx5,
        ExperimentId::CompEx6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig1 => "fig1",
            ExperimentId::Ex1 => "ex1",
            ExperimentId::Ex2 => "ex2",
            ExperimentId::Ex3 => "ex3",
            ExperimentId::Ex4 => "ex4",
            ExperimentId::Ex5 => "ex5",
            ExperimentId::Ex6 => "ex6",
            ExperimentId::Ex7 => "ex7",
            ExperimentId::CompEx2 => "comp-ex2",
            ExperimentId::CompEx3 => "comp-ex3",
            ExperimentId::CompEx4 => "comp-ex4",
            ExperimentId::CompEx5 => "comp-ex5",
            ExperimentId::CompEx6 => "comp-ex6",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err("expected desk or paper".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFamily {
    /// Perturbed uniform grids on the unit square.
    Mild,
    /// Imported meshes listed under `fixture`.
    High,
}

/// Transition widths of the Shishkin meshes simulated in Example 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaRule {
    /// `(2ε log N, (3/2) ε log 2N)`.
    Example,
    /// `min(1/2, (2/β_k) ε log N)` per direction.
    General,
}

impl SigmaRule {
    pub fn sigmas(self, eps: f64, b: [f64; 2], n: usize) -> (f64, f64) {
        match self {
            SigmaRule::Example => sms_core::problems::ex1_sigmas(eps, n),
            SigmaRule::General => {
                let s = |beta: f64| (2.0 / beta * eps * (n as f64).ln()).min(0.5);
                (s(b[0]), s(b[1]))
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            SigmaRule::Example => "example",
            SigmaRule::General => "general",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snap {
    None,
    Rule(SnapRule),
}

impl Snap {
    fn render(self) -> String {
        match self {
            Snap::None => "none".into(),
            Snap::Rule(SnapRule::Closest) => "closest".into(),
            Snap::Rule(SnapRule::HminSq(f)) => format!("hmin:{f}"),
        }
    }
}

impl FromStr for Snap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Snap::None),
            "closest" => Ok(Snap::Rule(SnapRule::Closest)),
            _ => {
                let f = s
                    .strip_prefix("hmin:")
                    .ok_or("expected none, closest or hmin:F")?
                    .parse::<f64>()
                    .map_err(|e| e.to_string())?;
                if f > 0.0 {
                    Ok(Snap::Rule(SnapRule::HminSq(f)))
                } else {
                    Err("hmin factor must be positive".into())
                }
            }
        }
    }
}

fn parse_diagonal(s: &str) -> Result<Diagonal, String> {
    match s {
        "swne" => Ok(Diagonal::SwNe),
        "nwse" => Ok(Diagonal::NwSe),
        _ => Err("expected swne or nwse".into()),
    }
}

fn diagonal_name(d: Diagonal) -> &'static str {
    match d {
        Diagonal::SwNe => "swne",
        Diagonal::NwSe => "nwse",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub scale: Scale,
    pub methods: Vec<Method>,
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub grids: usize,
    pub family: GridFamily,
    pub fixtures: Vec<PathBuf>,
    pub crosswind: f64,
    pub multiplier: f64,
    /// Use the tabulated crosswind values for each N.
    pub tuned: bool,
    /// Inset of the square bounding `Ω_h⁺`, in cell widths.
    pub shrink: f64,
    pub snap: Snap,
    pub theta: Vec<f64>,
    pub theta_count: usize,
    pub diagonal: Diagonal,
    pub sigma: SigmaRule,
    /// Problem id for `solve` and `diagnose`.
    pub problem: Option<String>,
    pub mesh: Option<PathBuf>,
}

/// The Hemker mesh shipped with the workspace.
pub fn default_hemker_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/hemker.mesh")
}

impl ExperimentConfig {
    /// Defaults of `experiment` at the given scale.
    pub fn defaults(experiment: ExperimentId, scale: Scale) -> Self {
        use ExperimentId::*;
        let paper = scale == Scale::Paper;
        let sms_and_supg = vec![Method::Supg, Method::SmsGalerkin, Method::SmsSupg];
        let (methods, n, eps) = match experiment {
            Fig1 => (vec![Method::Galerkin, Method::SmsGalerkin], vec![9], vec![1e-8]),
            Ex1 => (
                sms_and_supg,
                if paper { vec![5, 10, 20, 40, 80, 160, 320] } else { vec![5, 10, 20, 40, 80] },
                vec![1e-4, 1e-8],
            ),
            Ex2 | CompEx2 => (sms_and_supg, vec![10, 20, 40], vec![1e-8]),
            Ex3 => (sms_and_supg, if paper { vec![320] } else { vec![40] }, vec![1e-8]),
            CompEx3 => (
                sms_and_supg,
                if paper { vec![10, 20, 40, 80, 160, 320] } else { vec![10, 20, 40, 80] },
                vec![1e-8],
            ),
            Ex4 | CompEx4 => (sms_and_supg, vec![20, 64], vec![1e-8]),
            Ex5 | CompEx5 => (sms_and_supg, vec![16, 64], vec![1e-8]),
            Ex6 => (sms_and_supg, Vec::new(), vec![1e-4, 1e-8]),
            CompEx6 => (vec![Method::Supg, Method::SmsGalerkin], Vec::new(), vec![1e-8]),
            Ex7 => (sms_and_supg, vec![8, 20], vec![1e-4, 1e-6, 1e-10, 1e-14]),
        };
        let grids = match (experiment, paper) {
            (Ex3, true) => 200,
            (Ex3, false) => 50,
            (CompEx3, true) => 50,
            (CompEx3, false) => 10,
            _ => 0,
        };
        let fixtures = match experiment {
            Ex6 | CompEx6 => vec![default_hemker_fixture()],
            _ => Vec::new(),
        };
        Self {
            experiment,
            scale,
            methods,
            n,
            eps,
            seed: 0,
            grids,
            family: GridFamily::Mild,
            fixtures,
            crosswind: 0.0,
            multiplier: 1.0,
            tuned: matches!(experiment, Ex2 | CompEx2),
            shrink: 0.5,
            snap: match experiment {
                Ex5 | CompEx5 => Snap::Rule(SnapRule::Closest),
                _ => Snap::None,
            },
            theta: Vec::new(),
            theta_count: if paper { 100 } else { 10 },
            diagonal: Diagonal::SwNe,
            sigma: SigmaRule::Example,
            problem: None,
            mesh: None,
        }
    }

    /// Parses `text`. `experiment` and `scale` keys are read first so that
    /// the remaining keys overlay the right defaults; `fallback` supplies
    /// the experiment when the text has none.
    pub fn parse(text: &str, fallback: Option<ExperimentId>, scale: Option<Scale>) -> Result<Self, ConfigError> {
        let pairs = split_pairs(text)?;
        let mut experiment = fallback;
        let mut text_scale = None;
        for (line, k, v) in &pairs {
            match k.as_str() {
                "experiment" => experiment = Some(v.parse()?),
                "scale" => text_scale = Some(bad(*line, k, v, v.parse::<Scale>())?),
                _ => {}
            }
        }
        let experiment = experiment.ok_or(ConfigError::MissingExperiment)?;
        let mut cfg = Self::defaults(experiment, scale.or(text_scale).unwrap_or(Scale::Desk));
        let mut replaced = BTreeSet::new();
        for (line, key, value) in &pairs {
            cfg.apply(*line, key, value, &mut replaced)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback: Option<ExperimentId>, scale: Option<Scale>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, fallback, scale)
    }

    fn apply(&mut self, line: usize, key: &str, v: &str, replaced: &mut BTreeSet<String>) -> Result<(), ConfigError> {
        let mut first = || replaced.insert(key.to_string());
        match key {
            "experiment" | "scale" => {}
            "method" => {
                let m = Method::parse(v).ok_or_else(|| ConfigError::BadValue {
                    line,
                    key: key.into(),
                    value: v.into(),
                    reason: "expected galerkin, supg, sms-galerkin or sms-supg".into(),
                })?;
                if first() {
                    self.methods.clear();
                }
                self.methods.push(m);
            }
            "n" => {
                let n = bad(line, key, v, v.parse::<usize>())?;
                if first() {
                    self.n.clear();
                }
                self.n.push(n);
            }
            "eps" => {
                let e = bad(line, key, v, v.parse::<f64>())?;
                if first() {
                    self.eps.clear();
                }
                self.eps.push(e);
            }
            "theta" => {
                let t = bad(line, key, v, v.parse::<f64>())?;
                if first() {
                    self.theta.clear();
                }
                self.theta.push(t);
            }
            "fixture" => {
                if first() {
                    self.fixtures.clear();
                }
                self.fixtures.push(PathBuf::from(v));
            }
            "seed" => self.seed = bad(line, key, v, v.parse())?,
            "grids" => self.grids = bad(line, key, v, v.parse())?,
            "theta_count" => self.theta_count = bad(line, key, v, v.parse())?,
            "crosswind" => self.crosswind = bad(line, key, v, v.parse())?,
            "multiplier" => self.multiplier = bad(line, key, v, v.parse())?,
            "tuned" => self.tuned = bad(line, key, v, v.parse())?,
            "shrink" => self.shrink = bad(line, key, v, v.parse())?,
            "snap" => self.snap = bad(line, key, v, v.parse())?,
            "diagonal" => self.diagonal = bad(line, key, v, parse_diagonal(v))?,
            "family" => {
                self.family = match v {
                    "mild" => GridFamily::Mild,
                    "high" => GridFamily::High,
                    _ => return bad(line, key, v, Err("expected mild or high")),
                }
            }
            "sigma" => {
                self.sigma = match v {
                    "example" => SigmaRule::Example,
                    "general" => SigmaRule::General,
                    _ => return bad(line, key, v, Err("expected example or general")),
                }
            }
            "problem" => self.problem = Some(v.to_string()),
            "mesh" => self.mesh = Some(PathBuf::from(v)),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Checks the whole configuration before anything is solved.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for &m in &self.methods {
            if matches!(m, Method::Supg | Method::SmsSupg) {
                if let Some(&eps) = self.eps.iter().find(|&&e| !(e > 0.0)) {
                    return Err(ConfigError::MethodMismatch { method: m, eps });
                }
            }
        }
        if let Some(&eps) = self.eps.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(ConfigError::Invalid(format!("eps must be finite and nonnegative, got {eps}")));
        }
        for p in self.fixtures.iter().chain(self.mesh.iter()) {
            if !p.exists() {
                return Err(ConfigError::FixtureMissing(p.clone()));
            }
        }
        if self.family == GridFamily::High && self.fixtures.is_empty() && self.experiment == ExperimentId::Ex3 {
            return Err(ConfigError::Invalid("family=high needs at least one fixture".into()));
        }
        if self.tuned {
            if let Some(&n) = self.n.iter().find(|&&n| SupgOptions::tuned_crosswind(n).is_none()) {
                return Err(ConfigError::UntunedN(n));
            }
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("no method selected".into()));
        }
        if !(self.shrink > 0.0) {
            return Err(ConfigError::Invalid(format!("shrink must be positive, got {}", self.shrink)));
        }
        if !(self.multiplier > 0.0) || !self.crosswind.is_finite() {
            return Err(ConfigError::Invalid("multiplier must be positive and crosswind finite".into()));
        }
        Ok(())
    }

    /// SUPG options for a grid with `n` subdivisions.
    pub fn supg_options(&self, n: usize) -> SupgOptions {
        if self.tuned {
            if let Some(o) = SupgOptions::tuned_crosswind(n) {
                return o;
            }
        }
        SupgOptions {
            crosswind: self.crosswind,
            multiplier: self.multiplier,
        }
    }

    /// The configuration as `# key=value` lines, lists expanded.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("experiment={}", self.experiment),
            format!("scale={}", self.scale.name()),
            format!("seed={}", self.seed),
        ];
        out.extend(self.methods.iter().map(|m| format!("method={m}")));
        out.extend(self.n.iter().map(|n| format!("n={n}")));
        out.extend(self.eps.iter().map(|e| format!("eps={e:e}")));
        out.push(format!("grids={}", self.grids));
        out.push(format!(
            "family={}",
            match self.family {
                GridFamily::Mild => "mild",
                GridFamily::High => "high",
            }
        ));
        out.extend(self.fixtures.iter().map(|p| {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            format!("fixture={name}")
        }));
        out.push(format!("crosswind={}", self.crosswind));
        out.push(format!("multiplier={}", self.multiplier));
        out.push(format!("tuned={}", self.tuned));
        out.push(format!("shrink={}", self.shrink));
        out.push(format!("snap={}", self.snap.render()));
        out.extend(self.theta.iter().map(|t| format!("theta={t}")));
        out.push(format!("theta_count={}", self.theta_count));
        out.push(format!("diagonal={}", diagonal_name(self.diagonal)));
        out.push(format!("sigma={}", self.sigma.name()));
        if let Some(p) = &self.problem {
            out.push(format!("problem={p}"));
        }
        out.into_iter().map(|l| format!("# {l}")).collect()
    }
}

fn bad<T, E: ToString>(line: usize, key: &str, value: &str, r: Result<T, E>) -> Result<T, ConfigError> {
    r.map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn split_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_replace_then_append() {
        let c = ExperimentConfig::parse("experiment=ex1\nn=5\nn=10\n# note\neps=1e-4", None, None).unwrap();
        assert_eq!(c.n, vec![5, 10]);
        assert_eq!(c.eps, vec![1e-4]);
        assert_eq!(c.methods.len(), 3);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let e = ExperimentConfig::parse("experiment=ex4\n\nfoo=1", None, None).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 3, .. }));
    }

    #[test]
    fn supg_at_zero_eps_is_rejected() {
        let c = ExperimentConfig::parse("experiment=ex4\neps=0", None, None).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::MethodMismatch { .. })));
        let c = ExperimentConfig::parse("experiment=ex4\neps=0\nmethod=sms-galerkin", None, None).unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn tuned_needs_tabulated_n() {
        let c = ExperimentConfig::parse("experiment=ex2\nn=30", None, None).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::UntunedN(30))));
    }

    #[test]
    fn missing_fixture_is_reported() {
        let c = ExperimentConfig::parse("experiment=ex6\nfixture=/no/such/file.mesh", None, None).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::FixtureMissing(_))));
    }

    #[test]
    fn snap_values() {
        assert_eq!("hmin:0.1".parse::<Snap>().unwrap(), Snap::Rule(SnapRule::HminSq(0.1)));
        assert!("hmin:-1".parse::<Snap>().is_err());
    }

    #[test]
    fn paper_scale_grows_runs() {
        let c = ExperimentConfig::parse("experiment=ex3\nscale=paper", None, None).unwrap();
        assert_eq!((c.grids, c.n.clone()), (200, vec![320]));
        let c = ExperimentConfig::parse("experiment=ex3", None, Some(Scale::Desk)).unwrap();
        assert_eq!(c.grids, 50);
    }
}
