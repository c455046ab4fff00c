//! Problem configuration and the perturbation string grammar.
//!
//! ```text
//! brightness:<lo>..<hi>
//! patch:px=<u>,py=<u>,pw=<u>,ph=<u>:<lo>..<hi>
//! translate:tx=<i>:<lo>..<hi>
//! ```
//!
//! Terms are joined with `+` in application order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use attverify_core::{
    AttentionConfig, Budget, Dist, Filter, ImageMeta, PerturbationKind, PerturbationSpec, ThetaBox,
    TraversalConfig, TraversalMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::image::ImageSource;

/// One atom of a perturbation string with its parameter interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationTerm {
    pub kind: PerturbationKind,
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for PerturbationTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PerturbationKind::Brightness => write!(f, "brightness")?,
            PerturbationKind::Patch { px, py, pw, ph } => write!(f, "patch:px={px},py={py},pw={pw},ph={ph}")?,
            PerturbationKind::Translation { tx } => write!(f, "translate:tx={tx}")?,
        }
        write!(f, ":{}..{}", self.lo, self.hi)
    }
}

fn bad(term: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("perturbation term `{term}`: {why}"))
}

fn parse_interval(term: &str, s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| bad(term, "expected <lo>..<hi>"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(term, format!("bad number `{v}`")));
    let (lo, hi) = (num(lo)?, num(hi)?);
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(bad(term, "interval must be finite with lo <= hi"));
    }
    Ok((lo, hi))
}

fn parse_fields<'a>(term: &str, s: &'a str, names: &[&str]) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != names.len() {
        return Err(bad(term, format!("expected fields {}", names.join(","))));
    }
    parts
        .iter()
        .zip(names)
        .map(|(p, name)| {
            p.strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| bad(term, format!("expected `{name}=`")))
        })
        .collect()
}

fn parse_term(term: &str) -> Result<PerturbationTerm> {
    let (name, rest) = term.split_once(':').ok_or_else(|| bad(term, "missing `:`"))?;
    let (kind, interval) = match name.trim() {
        "brightness" => (PerturbationKind::Brightness, rest),
        "patch" => {
            let (fields, interval) = rest.split_once(':').ok_or_else(|| bad(term, "missing interval"))?;
            let v = parse_fields(term, fields, &["px", "py", "pw", "ph"])?;
            let u = |s: &str| s.parse::<usize>().map_err(|_| bad(term, format!("bad size `{s}`")));
            let kind = PerturbationKind::Patch {
                px: u(v[0])?,
                py: u(v[1])?,
                pw: u(v[2])?,
                ph: u(v[3])?,
            };
            (kind, interval)
        }
        "translate" => {
            let (fields, interval) = rest.split_once(':').ok_or_else(|| bad(term, "missing interval"))?;
            let v = parse_fields(term, fields, &["tx"])?;
            let tx = v[0].parse::<i64>().map_err(|_| bad(term, format!("bad offset `{}`", v[0])))?;
            (PerturbationKind::Translation { tx }, interval)
        }
        other => return Err(bad(term, format!("unknown perturbation `{other}`"))),
    };
    let (lo, hi) = parse_interval(term, interval)?;
    Ok(PerturbationTerm { kind, lo, hi })
}

/// Splits on `+` signs that start a new term, so exponents like `1e+2`
/// survive.
fn split_terms(s: &str) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for piece in s.split('+') {
        match terms.last_mut() {
            Some(last) if !piece.trim_start().starts_with(|c: char| c.is_ascii_alphabetic()) => {
                last.push('+');
                last.push_str(piece);
            }
            _ => terms.push(piece.to_string()),
        }
    }
    terms
}

pub fn parse_perturbation(s: &str) -> Result<Vec<PerturbationTerm>> {
    if s.trim().is_empty() {
        return Err(CliError::Config("empty perturbation".into()));
    }
    split_terms(s).iter().map(|t| parse_term(t.trim())).collect()
}

pub fn format_perturbation(terms: &[PerturbationTerm]) -> String {
    terms.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
}

pub fn build_spec(terms: &[PerturbationTerm], meta: ImageMeta) -> Result<PerturbationSpec<f64>> {
    let atoms = terms.iter().map(|t| t.kind).collect();
    let bx = ThetaBox::new(terms.iter().map(|t| t.lo).collect(), terms.iter().map(|t| t.hi).collect())?;
    Ok(PerturbationSpec::new(atoms, bx, meta)?)
}

/// Serializes through `Display` / `FromStr`.
pub(crate) mod code {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

/// Everything one run needs. Missing fields of a config file take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: PathBuf,
    /// Text grid path or `idx:<path>:<index>`.
    pub image: String,
    pub perturbation: String,
    #[serde(with = "code")]
    pub filter: Filter,
    #[serde(with = "code")]
    pub dist: Dist,
    pub delta: f64,
    pub w_delta: f64,
    #[serde(with = "code")]
    pub mode: TraversalMode,
    pub timeout_secs: Option<f64>,
    pub max_regions: Option<usize>,
    pub ray: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let attn = AttentionConfig::<f64>::default();
        Self {
            model: PathBuf::new(),
            image: String::new(),
            perturbation: String::new(),
            filter: attn.filter,
            dist: attn.dist,
            delta: attn.delta,
            w_delta: attn.w_delta,
            mode: TraversalMode::Bfs,
            timeout_secs: Budget::default().time_limit.map(|d| d.as_secs_f64()),
            max_regions: None,
            ray: None,
            out: None,
            svg: None,
        }
    }
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| CliError::Json { what: "config", source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    pub fn attention(&self) -> AttentionConfig<f64> {
        AttentionConfig {
            filter: self.filter,
            dist: self.dist,
            delta: self.delta,
            w_delta: self.w_delta,
        }
    }

    pub fn budget(&self) -> Budget {
        Budget {
            time_limit: self.timeout_secs.map(Duration::from_secs_f64),
            max_regions: self.max_regions,
        }
    }

    pub fn traversal(&self) -> TraversalConfig<f64> {
        TraversalConfig {
            ray: self.ray.clone(),
            ..TraversalConfig::default()
        }
    }

    pub fn image_source(&self) -> Result<ImageSource> {
        if self.image.is_empty() {
            return Err(CliError::Config("no image given".into()));
        }
        self.image.parse()
    }

    /// Checks everything that can be checked without loading the model and
    /// image, and returns the parsed perturbation.
    pub fn validate(&self) -> Result<Vec<PerturbationTerm>> {
        let terms = parse_perturbation(&self.perturbation)?;
        self.attention().validate()?;
        if matches!(self.mode, TraversalMode::GbsAr | TraversalMode::GbsCrar) && !(self.w_delta > 0.0) {
            return Err(CliError::Config(format!("mode {} needs w_delta > 0", self.mode)));
        }
        if let Some(t) = self.timeout_secs {
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::Config(format!("bad timeout {t}")));
            }
        }
        if let Some(ray) = &self.ray {
            if ray.len() != terms.len() || ray.iter().all(|&v| v == 0.0) {
                return Err(CliError::Config(format!(
                    "ray must be a nonzero vector with {} entries",
                    terms.len()
                )));
            }
        }
        if !self.model.is_file() {
            return Err(CliError::Config(format!("model file {} not found", self.model.display())));
        }
        let image_path = match self.image_source()? {
            ImageSource::Grid(p) | ImageSource::Idx { path: p, .. } => p,
        };
        if !image_path.is_file() {
            return Err(CliError::Config(format!("image file {} not found", image_path.display())));
        }
        Ok(terms)
    }
}
