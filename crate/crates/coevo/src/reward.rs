//! Outcome-based rewards: binary correctness from a verifier plus a
//! two-part format score, combined as `R = R_correct + λ·R_format`.
//!
//! Math answers are verified by exact rational canonicalization (integers,
//! decimals, reduced fractions, sign normalization, surrounding-text
//! stripping); anything unparseable falls back to normalized string
//! comparison. Code answers are executed in the sandbox against the task's
//! test cases; correctness requires every case to pass within its time
//! limit. Format scoring checks solution formatting on the terminal output
//! and delivery formatting on every inter-agent hop.

use std::path::{Path, PathBuf};
use std::time::Duration;

use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};

use crate::runtime::{extract_final_answer, Sandbox, SandboxError, Transcript};

/// Weight of the format term; the default used throughout is 0.4.
pub const DEFAULT_LAMBDA: f64 = 0.4;

/// Per-execution reward with its components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Binary correctness bit.
    pub r_correct: u8,
    /// Format score in [0, 1].
    pub r_format: f64,
    pub lambda: f64,
    /// `r_correct + lambda * r_format`.
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_correct: u8, r_format: f64, lambda: f64) -> Result<Self, RewardError> {
        let total = total_reward(r_correct, r_format, lambda)?;
        Ok(RewardBreakdown { r_correct, r_format, lambda, total })
    }

    /// The zero reward assigned to placeholder executions.
    pub fn zero(lambda: f64) -> Self {
        RewardBreakdown { r_correct: 0, r_format: 0.0, lambda, total: 0.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// `R = R_correct + λ·R_format`, with the domains checked.
pub fn total_reward(r_correct: u8, r_format: f64, lambda: f64) -> Result<f64, RewardError> {
    if r_correct > 1 {
        return Err(RewardError::Domain(format!("r_correct must be 0 or 1, got {r_correct}")));
    }
    if !(0.0..=1.0).contains(&r_format) {
        return Err(RewardError::Domain(format!("r_format must be in [0,1], got {r_format}")));
    }
    if !(lambda >= 0.0) {
        return Err(RewardError::Domain(format!("lambda must be ≥ 0, got {lambda}")));
    }
    Ok(f64::from(r_correct) + lambda * r_format)
}

// ---------------------------------------------------------------------------
// Math verification
// ---------------------------------------------------------------------------

/// 1 iff the two answers agree after canonicalization. Symmetric.
pub fn score_math(answer: &str, ground_truth: &str) -> u8 {
    let a = canonicalize(answer);
    let b = canonicalize(ground_truth);
    let equal = match (&a.rational, &b.rational) {
        (Some(x), Some(y)) => x == y,
        _ => !a.text.is_empty() && a.text == b.text,
    };
    u8::from(equal)
}

struct Canonical {
    rational: Option<BigRational>,
    text: String,
}

fn canonicalize(raw: &str) -> Canonical {
    let text = normalize_text(raw);
    let rational = parse_rational(&text).or_else(|| last_embedded_number(&text));
    Canonical { rational, text }
}

/// String-level normalization: LaTeX fraction unwrapping, math-mode and
/// spacing commands, digit-group commas, whitespace collapse.
fn normalize_text(raw: &str) -> String {
    let mut s = raw.trim().to_string();
    for frac in ["\\dfrac", "\\tfrac", "\\frac"] {
        while let Some(rewritten) = rewrite_frac(&s, frac) {
            s = rewritten;
        }
    }
    for junk in ["\\left", "\\right", "\\!", "\\,", "\\;", "$", "~"] {
        s = s.replace(junk, "");
    }
    s = strip_digit_commas(&s);
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    s.trim_end_matches(['.', ';']).trim().to_string()
}

/// Rewrite the first `\frac{a}{b}` into plain `a/b`.
fn rewrite_frac(s: &str, command: &str) -> Option<String> {
    let at = s.find(command)?;
    let after = &s[at + command.len()..];
    let open = after.find('{')?;
    if !after[..open].trim().is_empty() {
        return None;
    }
    let num_end = matching_brace(after, open)?;
    let numerator = &after[open + 1..num_end];
    let rest = &after[num_end + 1..];
    let den_open = rest.find('{')?;
    if !rest[..den_open].trim().is_empty() {
        return None;
    }
    let den_end = matching_brace(rest, den_open)?;
    let denominator = &rest[den_open + 1..den_end];
    Some(format!(
        "{}{}/{}{}",
        &s[..at],
        numerator.trim(),
        denominator.trim(),
        &rest[den_end + 1..]
    ))
}

fn matching_brace(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s[open..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drop commas used as digit-group separators ("1,234" → "1234").
fn strip_digit_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        let is_group_comma = c == ','
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if !is_group_comma {
            out.push(c);
        }
    }
    out
}

/// Parse a whole string as an exact rational: integer, finite decimal, or
/// `a/b` fraction, with leading sign.
fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_signed_decimal(num.trim())?;
        let d = parse_signed_decimal(den.trim())?;
        if d == BigRational::zero() {
            return None;
        }
        return Some(n / d);
    }
    parse_signed_decimal(s)
}

fn parse_signed_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let digits = digits.trim();
    if digits.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let numerator: BigInt = joined.parse().ok()?;
    let mut denominator = BigInt::one();
    for _ in 0..frac_part.len() {
        denominator *= 10;
    }
    let value = BigRational::new(numerator, denominator);
    Some(if negative { -value } else { value })
}

/// Surrounding-text stripping: when the whole string is not a number, take
/// the last embedded number-like token ("the answer is 116." → 116).
fn last_embedded_number(s: &str) -> Option<BigRational> {
    let chars: Vec<char> = s.chars().collect();
    let is_number_char =
        |c: char| c.is_ascii_digit() || c == '.' || c == '/' || c == '-' || c == '+';
    let mut best = None;
    let mut i = 0;
    while i < chars.len() {
        if is_number_char(chars[i]) {
            let start = i;
            while i < chars.len() && is_number_char(chars[i]) {
                i += 1;
            }
            let token: String = chars[start..i].iter().collect();
            if let Some(r) = parse_rational(&token) {
                best = Some(r);
            }
        } else {
            i += 1;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Code verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub stdin: String,
    pub expected_stdout: String,
}

/// What a task verifies: a math ground truth or a set of program test cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Math {
        ground_truth: String,
    },
    Code {
        test_cases: Vec<TestCase>,
        time_limit_s: f64,
        /// Advisory only; memory is not enforced at desk scale.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory_note: Option<String>,
    },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Math { .. } => "math",
            TaskKind::Code { .. } => "code",
        }
    }
}

/// One scorable unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    /// Dataset tag used by structure-share reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(flatten)]
    pub kind: TaskKind,
}

/// Run the program once per test case; 1 iff every case's stdout matches
/// after per-line trailing-whitespace and final-newline normalization. Any
/// timeout, crash, or mismatch scores 0. Sandbox spawn failures are faults.
pub fn score_code(
    program: &str,
    test_cases: &[TestCase],
    time_limit_s: f64,
    sandbox: &Sandbox,
) -> Result<u8, RewardError> {
    let timeout = Duration::from_secs_f64(time_limit_s);
    for case in test_cases {
        let outcome = sandbox.run_with_timeout(program, &case.stdin, timeout)?;
        if outcome.timed_out || outcome.exit_status != Some(0) {
            return Ok(0);
        }
        if !stdout_matches(&outcome.stdout, &case.expected_stdout) {
            return Ok(0);
        }
    }
    Ok(1)
}

fn stdout_matches(actual: &str, expected: &str) -> bool {
    let clean = |s: &str| {
        let mut lines: Vec<&str> = s.lines().map(str::trim_end).collect();
        while lines.last() == Some(&"") {
            lines.pop();
        }
        lines.join("\n")
    };
    clean(actual) == clean(expected)
}

// ---------------------------------------------------------------------------
// Format scoring
// ---------------------------------------------------------------------------

/// `0.5·solution_ok + 0.5·delivery_ok`. Solution formatting checks that an
/// answer is extractable from the terminal output; delivery formatting
/// checks that every inter-agent hop carried a well-formed delivery span
/// (vacuously satisfied when nothing is forwarded).
pub fn score_format(transcript: &Transcript) -> f64 {
    let solution_ok = transcript
        .turns
        .last()
        .is_some_and(|t| extract_final_answer(&t.response_text).is_some());
    let delivery_ok = transcript
        .turns
        .iter()
        .filter(|t| t.forwards_output)
        .all(|t| t.delivery.is_some());
    0.5 * f64::from(solution_ok) + 0.5 * f64::from(delivery_ok)
}

// ---------------------------------------------------------------------------
// The combined scorer
// ---------------------------------------------------------------------------

/// Scores one execution transcript against its task.
#[derive(Clone)]
pub struct RewardScorer {
    pub lambda: f64,
    sandbox: Sandbox,
}

impl RewardScorer {
    pub fn new(lambda: f64, sandbox: Sandbox) -> Self {
        RewardScorer { lambda, sandbox }
    }

    pub fn score(&self, transcript: &Transcript, task: &Task) -> Result<RewardBreakdown, RewardError> {
        let r_format = score_format(transcript);
        let r_correct = match (&task.kind, &transcript.final_answer) {
            (_, None) => 0,
            (TaskKind::Math { ground_truth }, Some(answer)) => score_math(&answer.payload, ground_truth),
            (TaskKind::Code { test_cases, time_limit_s, .. }, Some(answer)) => {
                score_code(&answer.payload, test_cases, *time_limit_s, &self.sandbox)?
            }
        };
        RewardBreakdown::new(r_correct, r_format, self.lambda)
    }
}

// ---------------------------------------------------------------------------
// Task files
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum TaskFileError {
    #[error("cannot read task file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse task file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid task {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Load one TOML task file: `{id, kind, question, ground_truth |
/// test_cases[], time_limit_s, dataset?, memory_note?}`.
pub fn load_task(path: &Path) -> Result<Task, TaskFileError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|source| TaskFileError::Io { path: display.clone(), source })?;
    let task: Task = toml::from_str(&text)
        .map_err(|e| TaskFileError::Parse { path: display.clone(), message: e.to_string() })?;
    validate_task(&task).map_err(|message| TaskFileError::Invalid { path: display, message })?;
    Ok(task)
}

fn validate_task(task: &Task) -> Result<(), String> {
    if task.id.is_empty() {
        return Err("id must be non-empty".into());
    }
    match &task.kind {
        TaskKind::Math { ground_truth } if ground_truth.is_empty() => {
            Err("math ground_truth must be non-empty".into())
        }
        TaskKind::Code { test_cases, .. } if test_cases.is_empty() => {
            Err("code task needs ≥ 1 test case".into())
        }
        TaskKind::Code { time_limit_s, .. } if !(*time_limit_s > 0.0) => {
            Err("time_limit_s must be > 0".into())
        }
        _ => Ok(()),
    }
}

/// Load every `*.toml` task under a file or directory path, sorted by file
/// name for stable ordering.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>, TaskFileError> {
    if path.is_file() {
        return Ok(vec![load_task(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|source| TaskFileError::Io { path: path.display().to_string(), source })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files.iter().map(|f| load_task(f)).collect()
}
