use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Phase, PolicyBackend, PolicyError, PolicyRequest, PolicyResponse};
use crate::clock::SharedClock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub phase: Phase,
    pub text: String,
    #[serde(default)]
    pub delay_s: f64,
}

impl ScriptStep {
    pub fn new(phase: Phase, text: impl Into<String>) -> Self {
        Self {
            phase,
            text: text.into(),
            delay_s: 0.0,
        }
    }

    pub fn think(text: impl Into<String>) -> Self {
        Self::new(Phase::Think, text)
    }

    pub fn act(text: impl Into<String>) -> Self {
        Self::new(Phase::Act, text)
    }

    pub fn delayed(mut self, secs: f64) -> Self {
        self.delay_s = secs;
        self
    }
}

/// Replays a fixed list of responses in order. Each request must match the
/// phase of the next step; running past the end is an error.
pub struct ScriptedBackend {
    steps: Vec<ScriptStep>,
    cursor: Mutex<usize>,
    clock: SharedClock,
}

impl ScriptedBackend {
    pub fn new(steps: Vec<ScriptStep>, clock: SharedClock) -> Self {
        Self {
            steps,
            cursor: Mutex::new(0),
            clock,
        }
    }

    /// Reads a JSON-lines script, one step per line. Blank lines are skipped.
    pub fn from_jsonl(text: &str, clock: SharedClock) -> Result<Self, PolicyError> {
        let steps = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| PolicyError::Config(format!("script line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<ScriptStep>, _>>()?;
        Ok(Self::new(steps, clock))
    }

    pub fn load(path: impl AsRef<Path>, clock: SharedClock) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Config(e.to_string()))?;
        Self::from_jsonl(&text, clock)
    }

    pub fn remaining(&self) -> usize {
        self.steps.len() - *self.cursor.lock().expect("cursor lock")
    }
}

#[async_trait]
impl PolicyBackend for ScriptedBackend {
    async fn invoke(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let step = {
            let mut cursor = self.cursor.lock().expect("cursor lock");
            let index = *cursor;
            let step = self
                .steps
                .get(index)
                .ok_or(PolicyError::ScriptExhausted(self.steps.len()))?;
            if step.phase != request.phase {
                return Err(PolicyError::ScriptPhaseMismatch {
                    index,
                    expected: step.phase,
                    got: request.phase,
                });
            }
            *cursor += 1;
            step.clone()
        };
        if step.delay_s > 0.0 {
            self.clock.sleep_secs(step.delay_s).await;
        }
        Ok(PolicyResponse::estimated(step.text))
    }
}
