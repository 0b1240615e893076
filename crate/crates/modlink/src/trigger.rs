//! Declarative rules turning channel samples into named game actions —
//! "jump when the sensor crosses the threshold", debounced so one physical
//! motion fires one action.
//!
//! Rules are edge-triggered: a threshold predicate fires when a sample
//! enters the satisfying region from outside it, never while the stream
//! merely stays inside. The first sample a rule sees only establishes
//! state. After firing, a rule is silent for its debounce window;
//! crossings inside the window are swallowed and do not restart it.
//!
//! Predicates compare in milli-units of the channel's converted value
//! (digital is 0/1000, analog counts scale by 1000, scalars are already
//! milli). `RisingEdge`/`FallingEdge` look at digital samples only. Text
//! samples never fire anything.
//!
//! The rule file format is one rule per line:
//!
//! ```text
//! # id   channel  predicate        debounce_ms  action
//! jump   0        gt(800000)       150          jump_hurdle
//! duck   0        lt(200000)       150          duck
//! fire   1        rising           50           fire_laser
//! ```
//!
//! Predicates: `gt(n)`, `lt(n)`, `between(lo,hi)`, `rising`, `falling`.
//! Full schema in `docs/triggers.md`.

use crate::value::ChannelValue;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Longest allowed debounce window.
pub const DEBOUNCE_MAX_MS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    GreaterThan(i64),
    LessThan(i64),
    Between(i64, i64),
    RisingEdge,
    FallingEdge,
}

impl Predicate {
    fn is_threshold(&self) -> bool {
        !matches!(self, Predicate::RisingEdge | Predicate::FallingEdge)
    }

    fn satisfied(&self, milli: i64) -> bool {
        match self {
            Predicate::GreaterThan(threshold) => milli > *threshold,
            Predicate::LessThan(threshold) => milli < *threshold,
            Predicate::Between(lo, hi) => (*lo..=*hi).contains(&milli),
            Predicate::RisingEdge | Predicate::FallingEdge => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerRule {
    pub rule_id: String,
    pub channel: u8,
    pub predicate: Predicate,
    pub debounce_ms: u32,
    pub action: String,
}

/// One fired action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionEvent {
    pub t_ms: u64,
    #[serde(rename = "rule")]
    pub rule_id: String,
    pub action: String,
    #[serde(rename = "value")]
    pub sample_value: i64,
}

impl ActionEvent {
    /// The one-object-per-line export format:
    /// `{"t_ms":…,"rule":…,"action":…,"value":…}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("action events always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TriggerError {
    #[error("line {0}: syntax error: {1}")]
    Syntax(usize, String),
    #[error("line {0}: duplicate rule id {1:?}")]
    DuplicateRuleId(usize, String),
    #[error("line {0}: bad predicate: {1}")]
    BadPredicate(usize, String),
    #[error("rule {0:?}: bad predicate: {1}")]
    InvalidRule(String, String),
    #[error("time went backwards: {now} after {last}")]
    TimeRegression { last: u64, now: u64 },
}

fn check_rule(rule: &TriggerRule) -> Result<(), (String, String)> {
    if let Predicate::Between(lo, hi) = rule.predicate {
        if lo > hi {
            return Err((
                rule.rule_id.clone(),
                format!("between({lo},{hi}) has lo > hi"),
            ));
        }
    }
    if rule.debounce_ms > DEBOUNCE_MAX_MS {
        return Err((
            rule.rule_id.clone(),
            format!("debounce {} ms exceeds {DEBOUNCE_MAX_MS}", rule.debounce_ms),
        ));
    }
    Ok(())
}

/// Parse the rule file format. Blank lines and `#` comments are skipped.
pub fn parse_rules(config_text: &str) -> Result<Vec<TriggerRule>, TriggerError> {
    let mut rules: Vec<TriggerRule> = Vec::new();
    for (index, raw_line) in config_text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(TriggerError::Syntax(
                line_no,
                format!(
                    "expected 5 fields (id channel predicate debounce action), got {}",
                    fields.len()
                ),
            ));
        }
        let rule_id = fields[0].to_string();
        if rules.iter().any(|r| r.rule_id == rule_id) {
            return Err(TriggerError::DuplicateRuleId(line_no, rule_id));
        }
        let channel: u8 = fields[1]
            .parse()
            .map_err(|_| TriggerError::Syntax(line_no, format!("bad channel {:?}", fields[1])))?;
        let predicate = parse_predicate(fields[2])
            .map_err(|reason| TriggerError::BadPredicate(line_no, reason))?;
        let debounce_ms: u32 = fields[3]
            .parse()
            .map_err(|_| TriggerError::Syntax(line_no, format!("bad debounce {:?}", fields[3])))?;
        let rule = TriggerRule {
            rule_id,
            channel,
            predicate,
            debounce_ms,
            action: fields[4].to_string(),
        };
        check_rule(&rule).map_err(|(_, reason)| TriggerError::BadPredicate(line_no, reason))?;
        rules.push(rule);
    }
    Ok(rules)
}

fn parse_predicate(text: &str) -> Result<Predicate, String> {
    match text {
        "rising" => return Ok(Predicate::RisingEdge),
        "falling" => return Ok(Predicate::FallingEdge),
        _ => {}
    }
    let (name, rest) = text
        .split_once('(')
        .ok_or_else(|| format!("unknown predicate {text:?}"))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("missing closing parenthesis in {text:?}"))?;
    let parse_num = |s: &str| -> Result<i64, String> {
        s.trim()
            .parse()
            .map_err(|_| format!("bad number {s:?} in {text:?}"))
    };
    match name {
        "gt" => Ok(Predicate::GreaterThan(parse_num(args)?)),
        "lt" => Ok(Predicate::LessThan(parse_num(args)?)),
        "between" => {
            let (lo, hi) = args
                .split_once(',')
                .ok_or_else(|| format!("between takes two numbers, got {args:?}"))?;
            Ok(Predicate::Between(parse_num(lo)?, parse_num(hi)?))
        }
        other => Err(format!("unknown predicate {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RuleState {
    /// Threshold rules: was the previous sample satisfying?
    /// Edge rules: previous digital level.
    previous: Option<bool>,
    last_fire: Option<u64>,
}

/// Incremental rule evaluator. Feed samples in non-decreasing time order;
/// fired actions come back per sample.
pub struct TriggerEngine {
    rules: Vec<TriggerRule>,
    states: BTreeMap<usize, RuleState>,
    last_t: Option<u64>,
}

impl TriggerEngine {
    pub fn new(rules: Vec<TriggerRule>) -> Result<TriggerEngine, TriggerError> {
        for rule in &rules {
            check_rule(rule).map_err(|(id, reason)| TriggerError::InvalidRule(id, reason))?;
        }
        // Multiple rules may fire on one sample, ordered by rule id.
        let mut rules = rules;
        rules.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
        Ok(TriggerEngine {
            states: (0..rules.len())
                .map(|i| (i, RuleState::default()))
                .collect(),
            rules,
            last_t: None,
        })
    }

    pub fn rules(&self) -> &[TriggerRule] {
        &self.rules
    }

    /// Channels any rule listens to, ascending.
    pub fn channels(&self) -> Vec<u8> {
        let mut channels: Vec<u8> = self.rules.iter().map(|r| r.channel).collect();
        channels.sort_unstable();
        channels.dedup();
        channels
    }

    /// Evaluate one sample against every rule watching its channel.
    pub fn evaluate_sample(
        &mut self,
        t_ms: u64,
        channel: u8,
        value: &ChannelValue,
    ) -> Result<Vec<ActionEvent>, TriggerError> {
        if let Some(last) = self.last_t {
            if t_ms < last {
                return Err(TriggerError::TimeRegression { last, now: t_ms });
            }
        }
        self.last_t = Some(t_ms);

        let mut fired = Vec::new();
        for (index, rule) in self.rules.iter().enumerate() {
            if rule.channel != channel {
                continue;
            }
            let state = self.states.get_mut(&index).unwrap();
            let Some(observation) = observe(rule.predicate, value) else {
                continue; // sample kind this rule cannot see
            };
            let crossing = match rule.predicate {
                // Falling: level drops 1 -> 0. Everything else fires on
                // entering the satisfying/high state from outside it.
                Predicate::FallingEdge => state.previous == Some(true) && !observation,
                _ => state.previous == Some(false) && observation,
            };
            state.previous = Some(observation);
            if !crossing {
                continue;
            }
            let debounced = state
                .last_fire
                .is_some_and(|last| t_ms - last < u64::from(rule.debounce_ms));
            if debounced {
                continue; // swallowed; the silence window does not restart
            }
            state.last_fire = Some(t_ms);
            fired.push(ActionEvent {
                t_ms,
                rule_id: rule.rule_id.clone(),
                action: rule.action.clone(),
                sample_value: value.as_milli().unwrap_or(0),
            });
        }
        Ok(fired)
    }
}

/// What a rule's predicate sees in a sample: threshold rules observe
/// satisfaction of any comparable value, edge rules observe digital
/// levels. `None` means the rule ignores the sample entirely.
fn observe(predicate: Predicate, value: &ChannelValue) -> Option<bool> {
    if predicate.is_threshold() {
        value.as_milli().map(|m| predicate.satisfied(m))
    } else {
        match value {
            ChannelValue::Digital(level) => Some(*level),
            _ => None,
        }
    }
}
