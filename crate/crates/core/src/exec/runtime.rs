use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use super::{PolicyBinding, TickStatus};
use crate::provider::{vlm_judge, ImageRef, ProviderError, VlmProvider};

/// One dispatch of an action to its policy.
#[derive(Debug, Clone, Copy)]
pub struct ActionCall<'a> {
    pub action: &'a str,
    pub binding: &'a PolicyBinding,
    /// The previous tick left this action Running and it is being polled.
    pub resumed: bool,
}

/// Images taken around the most recent physical action.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observation {
    pub before: Option<ImageRef>,
    pub after: Option<ImageRef>,
}

/// Carries out actions. Only External and Wait bindings reach the runtime;
/// NoOp actions succeed without a call.
pub trait ActionRuntime {
    fn invoke(&mut self, call: &ActionCall<'_>) -> Result<TickStatus, ProviderError>;

    /// Live runtimes block for the duration; the default completes at once.
    fn wait(&mut self, _seconds: f64) -> Result<TickStatus, ProviderError> {
        Ok(TickStatus::Success)
    }

    /// A camera frame, if the runtime has one.
    fn capture(&mut self) -> Option<ImageRef> {
        None
    }
}

pub trait ConditionEvaluator {
    fn judge(&mut self, condition: &str, observation: &Observation) -> Result<bool, ProviderError>;
}

impl<R: ActionRuntime + ?Sized> ActionRuntime for &mut R {
    fn invoke(&mut self, call: &ActionCall<'_>) -> Result<TickStatus, ProviderError> {
        (**self).invoke(call)
    }
    fn wait(&mut self, seconds: f64) -> Result<TickStatus, ProviderError> {
        (**self).wait(seconds)
    }
    fn capture(&mut self) -> Option<ImageRef> {
        (**self).capture()
    }
}

impl<E: ConditionEvaluator + ?Sized> ConditionEvaluator for &mut E {
    fn judge(&mut self, condition: &str, observation: &Observation) -> Result<bool, ProviderError> {
        (**self).judge(condition, observation)
    }
}

pub fn judge_condition(
    evaluator: &mut dyn ConditionEvaluator,
    condition: &str,
    before: Option<ImageRef>,
    after: Option<ImageRef>,
) -> Result<bool, ProviderError> {
    evaluator.judge(condition, &Observation { before, after })
}

/// Per-action outcome queues; an exhausted or absent queue yields the
/// fallback outcome.
#[derive(Debug, Clone)]
pub struct ScriptedRuntime {
    scripts: BTreeMap<String, VecDeque<Result<TickStatus, ProviderError>>>,
    fallback: TickStatus,
    pub calls: Vec<String>,
}

impl ScriptedRuntime {
    pub fn new(fallback: TickStatus) -> Self {
        ScriptedRuntime {
            scripts: BTreeMap::new(),
            fallback,
            calls: Vec::new(),
        }
    }

    pub fn always_succeed() -> Self {
        Self::new(TickStatus::Success)
    }

    pub fn script(mut self, action: &str, outcomes: impl IntoIterator<Item = TickStatus>) -> Self {
        self.scripts
            .entry(action.into())
            .or_default()
            .extend(outcomes.into_iter().map(Ok));
        self
    }

    pub fn fail_transport(mut self, action: &str, message: &str) -> Self {
        self.scripts
            .entry(action.into())
            .or_default()
            .push_back(Err(ProviderError::Transport(message.into())));
        self
    }

    fn next(&mut self, action: &str) -> Result<TickStatus, ProviderError> {
        self.calls.push(action.into());
        self.scripts
            .get_mut(action)
            .and_then(VecDeque::pop_front)
            .unwrap_or(Ok(self.fallback))
    }
}

impl ActionRuntime for ScriptedRuntime {
    fn invoke(&mut self, call: &ActionCall<'_>) -> Result<TickStatus, ProviderError> {
        self.next(call.action)
    }

    fn wait(&mut self, _seconds: f64) -> Result<TickStatus, ProviderError> {
        Ok(TickStatus::Success)
    }
}

/// Fixture verdicts per condition. Queued verdicts are consumed first,
/// then the fixed value; an unknown condition is false.
#[derive(Debug, Clone, Default)]
pub struct ScriptedConditions {
    fixed: BTreeMap<String, Result<bool, ProviderError>>,
    queued: BTreeMap<String, VecDeque<bool>>,
}

impl ScriptedConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, condition: &str, value: bool) -> Self {
        self.fixed.insert(condition.into(), Ok(value));
        self
    }

    pub fn set_error(mut self, condition: &str, error: ProviderError) -> Self {
        self.fixed.insert(condition.into(), Err(error));
        self
    }

    pub fn queue(mut self, condition: &str, values: impl IntoIterator<Item = bool>) -> Self {
        self.queued.entry(condition.into()).or_default().extend(values);
        self
    }
}

impl ConditionEvaluator for ScriptedConditions {
    fn judge(&mut self, condition: &str, _: &Observation) -> Result<bool, ProviderError> {
        if let Some(v) = self.queued.get_mut(condition).and_then(VecDeque::pop_front) {
            return Ok(v);
        }
        self.fixed.get(condition).cloned().unwrap_or(Ok(false))
    }
}

/// Asks a vision-language model whether the condition holds, showing the
/// before and after frames that are available. Underscores in condition
/// names are read as spaces.
pub struct VlmConditions<V> {
    pub vlm: V,
}

impl<V: VlmProvider> ConditionEvaluator for VlmConditions<V> {
    fn judge(&mut self, condition: &str, observation: &Observation) -> Result<bool, ProviderError> {
        let images = observation
            .before
            .iter()
            .chain(observation.after.iter())
            .cloned()
            .collect();
        vlm_judge(&self.vlm, &condition.replace('_', " "), images).map(|v| v.achieved)
    }
}
