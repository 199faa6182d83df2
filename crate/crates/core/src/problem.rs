//! Problem definition for
//!
//! ```text
//! w''(t) = F(t, w(t), w'(t), ∫₀ᵗ G(t, s, w(s), w'(s)) ds),   t ∈ [0, T]
//! w(0) + Σ c_k w(t_k) = w₀
//! w'(T) = β w'(0),                                         1 < β < ∞
//! ```
//!
//! plus the line-based problem file format and the built-in instances.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{parse, ExprError, Expression};

/// Variable order for right-hand sides `F`; `I` is the inner integral.
pub const RHS_VARS: [&str; 4] = ["t", "w", "wp", "I"];
pub use crate::quadrature::KERNEL_VARS;

/// Optional solver settings a problem file may carry.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FileSettings {
    pub gamma: Option<f64>,
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub label: Option<String>,
    /// Horizon `T`.
    pub horizon: f64,
    /// Boundary ratio `β` in `w'(T) = β w'(0)`.
    pub beta: f64,
    /// Right side `w₀` of the nonlocal condition.
    pub w0: f64,
    pub coefficients: Vec<f64>,
    pub points: Vec<f64>,
    /// `F` over `t, w, wp, I`.
    pub rhs: Expression,
    /// `G` over `t, s, w, wp`.
    pub kernel: Expression,
    pub lipschitz_rhs: f64,
    pub lipschitz_kernel: f64,
    pub settings: FileSettings,
}

impl Problem {
    pub fn sum_c(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Same problem with a different nonlocal datum.
    pub fn with_w0(&self, w0: f64) -> Problem {
        Problem { w0, ..self.clone() }
    }

    /// `T`, `β`, `c` and `t_k` agree, so both problems share the side
    /// conditions and only `w₀`, `F`, `G` differ.
    pub fn same_structure(&self, other: &Problem) -> bool {
        self.horizon == other.horizon
            && self.beta == other.beta
            && self.coefficients == other.coefficients
            && self.points == other.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HorizonNotPositive(f64),
    BetaNotAboveOne(f64),
    NonFinite(&'static str),
    NoPoints,
    LengthMismatch { coefficients: usize, points: usize },
    FirstPointNotPositive(f64),
    PointsNotIncreasing { index: usize },
    LastPointBeyondHorizon { point: f64, horizon: f64 },
    SumCoefficientsMinusOne,
    NegativeLipschitz(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonNotPositive(t) => write!(f, "T must be positive, got {t}"),
            Violation::BetaNotAboveOne(b) => write!(f, "beta must exceed 1, got {b}"),
            Violation::NonFinite(key) => write!(f, "{key} must be finite"),
            Violation::NoPoints => write!(f, "at least one nonlocal point is required"),
            Violation::LengthMismatch { coefficients, points } => {
                write!(f, "length mismatch: {coefficients} coefficients but {points} points")
            }
            Violation::FirstPointNotPositive(t) => write!(f, "first point must be positive, got {t}"),
            Violation::PointsNotIncreasing { index } => {
                write!(f, "points must be strictly increasing (entry {})", index + 1)
            }
            Violation::LastPointBeyondHorizon { point, horizon } => {
                write!(f, "last point {point} exceeds T = {horizon}")
            }
            Violation::SumCoefficientsMinusOne => write!(f, "sum of c equals -1"),
            Violation::NegativeLipschitz(key) => write!(f, "{key} must be non-negative"),
        }
    }
}

/// Every violated standing assumption; empty when the problem is well posed.
pub fn validate(p: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    let scalars =
        [("T", p.horizon), ("beta", p.beta), ("w0", p.w0), ("LF", p.lipschitz_rhs), ("LG", p.lipschitz_kernel)];
    for (key, v) in scalars {
        if !v.is_finite() {
            out.push(Violation::NonFinite(key));
        }
    }
    if p.coefficients.iter().any(|c| !c.is_finite()) {
        out.push(Violation::NonFinite("c"));
    }
    if p.points.iter().any(|t| !t.is_finite()) {
        out.push(Violation::NonFinite("tk"));
    }
    if p.horizon <= 0.0 {
        out.push(Violation::HorizonNotPositive(p.horizon));
    }
    if p.beta <= 1.0 {
        out.push(Violation::BetaNotAboveOne(p.beta));
    }
    if p.coefficients.is_empty() || p.points.is_empty() {
        out.push(Violation::NoPoints);
    }
    if p.coefficients.len() != p.points.len() {
        out.push(Violation::LengthMismatch { coefficients: p.coefficients.len(), points: p.points.len() });
    }
    if let Some(&first) = p.points.first() {
        if first <= 0.0 {
            out.push(Violation::FirstPointNotPositive(first));
        }
    }
    for (i, pair) in p.points.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            out.push(Violation::PointsNotIncreasing { index: i + 1 });
        }
    }
    if let Some(&last) = p.points.last() {
        if last > p.horizon {
            out.push(Violation::LastPointBeyondHorizon { point: last, horizon: p.horizon });
        }
    }
    if (1.0 + p.sum_c()).abs() <= 1e-12 * (1.0 + p.coefficients.iter().map(|c| c.abs()).sum::<f64>()) {
        out.push(Violation::SumCoefficientsMinusOne);
    }
    if p.lipschitz_rhs < 0.0 {
        out.push(Violation::NegativeLipschitz("LF"));
    }
    if p.lipschitz_kernel < 0.0 {
        out.push(Violation::NegativeLipschitz("LG"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error("line {line}: expected 'key = value'")]
    NotKeyValue { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key {0}")]
    MissingKey(&'static str),
    #[error("line {line}: malformed value for '{key}': {msg}")]
    Malformed { line: usize, key: String, msg: String },
    #[error("line {line}: expression '{key}': {source}")]
    Expression { line: usize, key: String, source: ExprError },
    #[error("invalid problem: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

const REQUIRED: [&str; 9] = ["T", "beta", "w0", "c", "tk", "F", "G", "LF", "LG"];
const OPTIONAL: [&str; 5] = ["label", "gamma", "N", "tol", "max_iter"];

/// Parses and validates a problem file.
pub fn load_problem(text: &str) -> Result<Problem, LoadError> {
    let mut entries: Vec<(&str, &str, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(LoadError::NotKeyValue { line })?;
        let key = key.trim();
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(LoadError::UnknownKey { line, key: key.to_string() });
        }
        if entries.iter().any(|(k, _, _)| *k == key) {
            return Err(LoadError::DuplicateKey { line, key: key.to_string() });
        }
        entries.push((key, value.trim(), line));
    }
    let get = |key: &'static str| entries.iter().find(|(k, _, _)| *k == key).map(|(_, v, l)| (*v, *l));
    let need = |key: &'static str| get(key).ok_or(LoadError::MissingKey(key));
    for key in REQUIRED {
        need(key)?;
    }

    let real = |key: &'static str| -> Result<f64, LoadError> {
        let (v, line) = need(key)?;
        parse_real(v).map_err(|msg| LoadError::Malformed { line, key: key.into(), msg })
    };
    let list = |key: &'static str| -> Result<Vec<f64>, LoadError> {
        let (v, line) = need(key)?;
        v.split(',')
            .map(|item| parse_real(item.trim()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|msg| LoadError::Malformed { line, key: key.into(), msg })
    };
    let expression = |key: &'static str, vars: &[&str]| -> Result<Expression, LoadError> {
        let (v, line) = need(key)?;
        parse(v, vars).map_err(|source| LoadError::Expression { line, key: key.into(), source })
    };
    let opt_real = |key: &'static str| -> Result<Option<f64>, LoadError> { get(key).map(|_| real(key)).transpose() };
    let opt_int = |key: &'static str| -> Result<Option<usize>, LoadError> {
        get(key)
            .map(|(v, line)| {
                v.parse::<usize>().map_err(|e| LoadError::Malformed { line, key: key.into(), msg: e.to_string() })
            })
            .transpose()
    };

    let problem = Problem {
        label: get("label").map(|(v, _)| v.to_string()).filter(|s| !s.is_empty()),
        horizon: real("T")?,
        beta: real("beta")?,
        w0: real("w0")?,
        coefficients: list("c")?,
        points: list("tk")?,
        rhs: expression("F", &RHS_VARS)?,
        kernel: expression("G", &KERNEL_VARS)?,
        lipschitz_rhs: real("LF")?,
        lipschitz_kernel: real("LG")?,
        settings: FileSettings {
            gamma: opt_real("gamma")?,
            n: opt_int("N")?,
            tol: opt_real("tol")?,
            max_iter: opt_int("max_iter")?,
        },
    };
    let violations = validate(&problem);
    if violations.is_empty() {
        Ok(problem)
    } else {
        Err(LoadError::Invalid(violations))
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn real_text(v: f64) -> String {
    format!("{v:?}")
}

/// Renders `p` in the problem file format; [`load_problem`] reads it back
/// field for field.
pub fn serialize(p: &Problem) -> String {
    let join = |xs: &[f64]| xs.iter().map(|x| real_text(*x)).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    if let Some(label) = &p.label {
        out.push_str(&format!("label = {}\n", label.replace(['\n', '#'], " ")));
    }
    out.push_str(&format!("T = {}\n", real_text(p.horizon)));
    out.push_str(&format!("beta = {}\n", real_text(p.beta)));
    out.push_str(&format!("w0 = {}\n", real_text(p.w0)));
    out.push_str(&format!("c = {}\n", join(&p.coefficients)));
    out.push_str(&format!("tk = {}\n", join(&p.points)));
    out.push_str(&format!("LF = {}\n", real_text(p.lipschitz_rhs)));
    out.push_str(&format!("LG = {}\n", real_text(p.lipschitz_kernel)));
    out.push_str(&format!("F = {}\n", p.rhs.to_text()));
    out.push_str(&format!("G = {}\n", p.kernel.to_text()));
    let s = &p.settings;
    if let Some(g) = s.gamma {
        out.push_str(&format!("gamma = {}\n", real_text(g)));
    }
    if let Some(n) = s.n {
        out.push_str(&format!("N = {n}\n"));
    }
    if let Some(t) = s.tol {
        out.push_str(&format!("tol = {}\n", real_text(t)));
    }
    if let Some(m) = s.max_iter {
        out.push_str(&format!("max_iter = {m}\n"));
    }
    out
}

/// The shipped reference instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinId {
    /// `T = 1`, `β = e^{0.1}`, right-hand side exactly as stated.
    Ex1,
    /// `Ex1` with the constant `sin(0.1)/10` replaced by `sin(0.1)/100`,
    /// which makes `exp(t/10)` an exact solution.
    Ex1Corrected,
    /// `T = 2`, `β = 5`; exact solution `(t + t²)/10`.
    Ex2,
}

impl BuiltinId {
    pub const ALL: [BuiltinId; 3] = [BuiltinId::Ex1, BuiltinId::Ex1Corrected, BuiltinId::Ex2];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinId::Ex1 => "ex1",
            BuiltinId::Ex1Corrected => "ex1_corrected",
            BuiltinId::Ex2 => "ex2",
        }
    }

    /// Closed-form solution claimed for the instance, with its derivative.
    pub fn claimed_solution(self) -> (&'static str, &'static str) {
        match self {
            BuiltinId::Ex1 | BuiltinId::Ex1Corrected => ("exp(t/10)", "exp(t/10)/10"),
            BuiltinId::Ex2 => ("(t+t^2)/10", "(1+2*t)/10"),
        }
    }
}

impl fmt::Display for BuiltinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown built-in example '{0}' (expected one of ex1, ex1_corrected, ex2)")]
pub struct UnknownBuiltin(pub String);

impl FromStr for BuiltinId {
    type Err = UnknownBuiltin;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinId::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| UnknownBuiltin(s.to_string()))
    }
}

const EX1_KERNEL: &str = "(w - exp(s/10)/10*sin(w) + exp(s/10)/10*cos(wp))/10";
const EX1_RHS: &str = "0.010540 + sin(0.1)/10 - cos(w)/1000 - sin(wp)/100 + I/100";
const EX1_RHS_CORRECTED: &str = "0.010540 + sin(0.1)/100 - cos(w)/1000 - sin(wp)/100 + I/100";
const EX2_KERNEL: &str = "(1+2*s)/10*sin(w) + wp";
const EX2_RHS: &str = "2/10 - t^2/1000 - (9-t)/1000 + cos(w)/100 - wp/100 + I/100";

/// Builds a reference instance. `w₀` is chosen so the claimed closed-form
/// solution satisfies the nonlocal condition exactly.
pub fn builtin_example(id: BuiltinId) -> Problem {
    let expr = |text: &str, vars: &[&str]| parse(text, vars).expect("built-in expressions parse");
    match id {
        BuiltinId::Ex1 | BuiltinId::Ex1Corrected => {
            let coefficients = vec![1.0, 1.0, -1.0, 0.0, 1.0];
            let points = vec![0.2, 0.4, 0.6, 0.8, 1.0];
            let sol = |t: f64| (t / 10.0).exp();
            let w0 = sol(0.0) + coefficients.iter().zip(&points).map(|(c, t)| c * sol(*t)).sum::<f64>();
            let (rhs, label) = match id {
                BuiltinId::Ex1 => (
                    EX1_RHS,
                    "ex1: right-hand side as stated (constant sin(0.1)/10); c3 = -1 at t3 = 0.6; \
                     w0 = 1 + e^0.02 + e^0.04 - e^0.06 + e^0.1 ~ 3.1043465 (stated: 3.10)",
                ),
                _ => (
                    EX1_RHS_CORRECTED,
                    "ex1_corrected: constant sin(0.1)/100 so that exp(t/10) solves exactly; \
                     c3 = -1 at t3 = 0.6; w0 ~ 3.1043465 (stated: 3.10)",
                ),
            };
            Problem {
                label: Some(label.to_string()),
                horizon: 1.0,
                beta: 0.1f64.exp(),
                w0,
                coefficients,
                points,
                rhs: expr(rhs, &RHS_VARS),
                kernel: expr(EX1_KERNEL, &KERNEL_VARS),
                lipschitz_rhs: 0.01,
                lipschitz_kernel: (1.0 + 0.1f64.exp()) / 10.0,
                settings: FileSettings::default(),
            }
        }
        BuiltinId::Ex2 => {
            let coefficients = vec![1.0; 4];
            let points = vec![0.5, 1.0, 1.5, 2.0];
            let sol = |t: f64| (t + t * t) / 10.0;
            let w0 = sol(0.0) + coefficients.iter().zip(&points).map(|(c, t)| c * sol(*t)).sum::<f64>();
            Problem {
                label: Some("ex2: exact solution (t+t^2)/10; w0 = 1.25 (stated: 1.35)".to_string()),
                horizon: 2.0,
                beta: 5.0,
                w0,
                coefficients,
                points,
                rhs: expr(EX2_RHS, &RHS_VARS),
                kernel: expr(EX2_KERNEL, &KERNEL_VARS),
                lipschitz_rhs: 0.01,
                lipschitz_kernel: 1.0,
                settings: FileSettings::default(),
            }
        }
    }
}

/// Looks up a built-in instance by its id string.
pub fn builtin_by_name(name: &str) -> Result<Problem, UnknownBuiltin> {
    Ok(builtin_example(name.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EX2_FILE: &str = "\
T = 2
beta = 5
w0 = 1.25
c = 1, 1, 1, 1
tk = 0.5, 1, 1.5, 2
LF = 0.01
LG = 1
F = 2/10 - t^2/1000 - (9-t)/1000 + cos(w)/100 - wp/100 + I/100
G = (1+2*s)/10*sin(w) + wp
";

    #[test]
    fn builtins_validate() {
        for id in BuiltinId::ALL {
            assert!(builtin_example(id).validate().is_empty(), "{id}");
        }
        assert_eq!(builtin_example(BuiltinId::Ex1).sum_c(), 2.0);
        assert!((builtin_example(BuiltinId::Ex1).beta - 1.1051709).abs() < 1e-7);
    }

    #[test]
    fn ex2_fields() {
        let p = builtin_example(BuiltinId::Ex2);
        assert_eq!(p.coefficients, vec![1.0; 4]);
        assert_eq!(p.sum_c(), 4.0);
        // 0 + 0.075 + 0.2 + 0.375 + 0.6
        assert!((p.w0 - 1.25).abs() < 1e-15);
    }

    #[test]
    fn ex1_w0_is_self_consistent() {
        let p = builtin_example(BuiltinId::Ex1);
        assert!((p.w0 - 3.1043465).abs() < 1e-7, "{}", p.w0);
    }

    #[test]
    fn validate_reports_boundary_cases() {
        let mut p = builtin_example(BuiltinId::Ex2);
        p.coefficients = vec![-2.0, 1.0];
        p.points = vec![0.5, 1.0];
        assert_eq!(p.validate(), vec![Violation::SumCoefficientsMinusOne]);
        assert_eq!(Violation::SumCoefficientsMinusOne.to_string(), "sum of c equals -1");
        // rounding leaves 1 + Σc at 1.1e-16, which still counts as -1
        p.coefficients = vec![0.2, 0.2, -1.4];
        p.points = vec![0.5, 1.0, 1.5];
        assert_ne!(1.0 + p.sum_c(), 0.0);
        assert_eq!(p.validate(), vec![Violation::SumCoefficientsMinusOne]);

        let mut p = builtin_example(BuiltinId::Ex2);
        p.beta = 1.0;
        assert_eq!(p.validate(), vec![Violation::BetaNotAboveOne(1.0)]);
        assert!(p.validate()[0].to_string().contains("beta must exceed 1"));

        let mut p = builtin_example(BuiltinId::Ex2);
        p.points = vec![0.0, 1.0, 1.0, 2.5];
        let v = p.validate();
        assert!(v.contains(&Violation::FirstPointNotPositive(0.0)));
        assert!(v.contains(&Violation::PointsNotIncreasing { index: 2 }));
        assert!(v.contains(&Violation::LastPointBeyondHorizon { point: 2.5, horizon: 2.0 }));
    }

    #[test]
    fn loads_ex2_file() {
        let p = load_problem(EX2_FILE).unwrap();
        assert_eq!(p.points.len(), 4);
        assert_eq!((p.beta, p.horizon), (5.0, 2.0));
        let b = builtin_example(BuiltinId::Ex2);
        assert_eq!(p.rhs, b.rhs);
        assert_eq!(p.kernel, b.kernel);
    }

    #[test]
    fn loader_errors() {
        let missing = EX2_FILE.replace("G = (1+2*s)/10*sin(w) + wp\n", "");
        assert_eq!(load_problem(&missing), Err(LoadError::MissingKey("G")));

        let mismatch = EX2_FILE.replace("c = 1, 1, 1, 1", "c = 1, 1").replace("tk = 0.5, 1, 1.5, 2", "tk = 0.5");
        match load_problem(&mismatch) {
            Err(LoadError::Invalid(v)) => {
                assert!(v.contains(&Violation::LengthMismatch { coefficients: 2, points: 1 }))
            }
            other => panic!("{other:?}"),
        }

        let unknown = format!("{EX2_FILE}alpha = 3\n");
        assert!(matches!(load_problem(&unknown), Err(LoadError::UnknownKey { line: 10, .. })));
        let dup = format!("{EX2_FILE}T = 3\n");
        assert!(matches!(load_problem(&dup), Err(LoadError::DuplicateKey { line: 10, .. })));
        let bad = EX2_FILE.replace("beta = 5", "beta = five");
        assert!(matches!(load_problem(&bad), Err(LoadError::Malformed { line: 2, .. })));
        let bad_list = EX2_FILE.replace("c = 1, 1, 1, 1", "c = 1, , 1, 1");
        assert!(matches!(load_problem(&bad_list), Err(LoadError::Malformed { line: 4, .. })));
        let bad_expr = EX2_FILE.replace("G = (1+2*s)/10*sin(w) + wp", "G = I + w");
        assert!(matches!(
            load_problem(&bad_expr),
            Err(LoadError::Expression { source: ExprError::UnknownVariable { .. }, .. })
        ));
        assert!(matches!(load_problem("T 2\n"), Err(LoadError::NotKeyValue { line: 1 })));
    }

    #[test]
    fn comments_and_optional_keys() {
        let text = format!("# reference problem\nlabel = demo # trailing\n{EX2_FILE}gamma = 0.8\nN = 200\n");
        let p = load_problem(&text).unwrap();
        assert_eq!(p.label.as_deref(), Some("demo"));
        assert_eq!(p.settings.gamma, Some(0.8));
        assert_eq!(p.settings.n, Some(200));
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin_by_name("ex2").unwrap(), builtin_example(BuiltinId::Ex2));
        assert_eq!(builtin_by_name("ex3"), Err(UnknownBuiltin("ex3".into())));
    }

    proptest! {
        #[test]
        fn serialize_round_trip(
            id in prop::sample::select(BuiltinId::ALL.to_vec()),
            w0 in -10.0f64..10.0,
            beta in 1.0001f64..20.0,
            gamma in prop::option::of(0.01f64..5.0),
            n in prop::option::of(2usize..5000),
        ) {
            let mut p = builtin_example(id).with_w0(w0);
            p.beta = beta;
            p.settings.gamma = gamma;
            p.settings.n = n;
            let back = load_problem(&serialize(&p)).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
