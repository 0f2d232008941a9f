//! The global tool pool, the local tool set visible to the act policy, the
//! retrieval update rule, and the candidate proposer interface.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentAction, ModelError, ReasoningTrace, ToolId, ToolSpec};

pub const DEFAULT_CANDIDATE_CAP: usize = 5;

#[derive(Debug, Error)]
pub enum ToolSpaceError {
    #[error("tool `{0}` is already registered")]
    DuplicateName(String),
    #[error("unknown tool id {0}")]
    UnknownTool(ToolId),
    #[error("unknown tool name `{0}`")]
    UnknownToolName(String),
    #[error("tool pool is empty")]
    EmptyPool,
    #[error("candidate cap must be at least 1")]
    ZeroCap,
    #[error("invalid tool spec: {0}")]
    InvalidSpec(#[from] ModelError),
    #[error("proposer failed: {0}")]
    Proposer(String),
    #[error("failed to read tool pool: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse tool pool: {0}")]
    Json(#[from] serde_json::Error),
}

/// The full registry of callable tools.
#[derive(Debug, Clone, Default)]
pub struct GlobalToolPool {
    tools: BTreeMap<ToolId, ToolSpec>,
    name_index: HashMap<String, ToolId>,
    next_id: u32,
}

impl GlobalToolPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_specs(specs: impl IntoIterator<Item = ToolSpec>) -> Result<Self, ToolSpaceError> {
        let mut pool = Self::new();
        for spec in specs {
            pool.register(spec)?;
        }
        Ok(pool)
    }

    /// Loads a pool from a JSON file holding an array of tool specs.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ToolSpaceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ToolSpaceError> {
        let specs: Vec<ToolSpec> = serde_json::from_str(text)?;
        Self::from_specs(specs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.tools.values().collect::<Vec<_>>())
            .expect("tool specs serialize")
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<ToolId, ToolSpaceError> {
        spec.validate()?;
        if self.name_index.contains_key(&spec.name) {
            return Err(ToolSpaceError::DuplicateName(spec.name));
        }
        let id = ToolId(self.next_id);
        self.next_id += 1;
        self.name_index.insert(spec.name.clone(), id);
        self.tools.insert(id, spec);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, id: ToolId) -> Option<&ToolSpec> {
        self.tools.get(&id)
    }

    pub fn resolve(&self, name: &str) -> Option<ToolId> {
        self.name_index.get(name).copied()
    }

    pub fn contains(&self, id: ToolId) -> bool {
        self.tools.contains_key(&id)
    }

    /// Tools in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (ToolId, &ToolSpec)> {
        self.tools.iter().map(|(id, spec)| (*id, spec))
    }

    pub fn ids(&self) -> impl Iterator<Item = ToolId> + '_ {
        self.tools.keys().copied()
    }

    /// Specs for the given ids in registration order.
    pub fn specs<'a>(
        &'a self,
        ids: &'a BTreeSet<ToolId>,
    ) -> Result<Vec<&'a ToolSpec>, ToolSpaceError> {
        ids.iter()
            .map(|id| self.get(*id).ok_or(ToolSpaceError::UnknownTool(*id)))
            .collect()
    }

    pub fn check_ids<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a ToolId>,
    ) -> Result<(), ToolSpaceError> {
        for id in ids {
            if !self.contains(*id) {
                return Err(ToolSpaceError::UnknownTool(*id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalToolSet {
    pub ids: BTreeSet<ToolId>,
    pub generation: u64,
}

impl LocalToolSet {
    pub fn new(ids: impl IntoIterator<Item = ToolId>) -> Self {
        Self {
            ids: ids.into_iter().collect(),
            generation: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateProposal {
    pub ids: BTreeSet<ToolId>,
    pub scores: BTreeMap<ToolId, f64>,
    pub propose_duration: f64,
}

impl CandidateProposal {
    pub fn from_ids(ids: impl IntoIterator<Item = ToolId>) -> Self {
        Self {
            ids: ids.into_iter().collect(),
            ..Default::default()
        }
    }
}

/// Applies the tool-space transition: after a retrieval action the proposed
/// candidates are merged into the local set, otherwise it is left alone.
pub fn update_local(
    local: &LocalToolSet,
    action: &AgentAction,
    candidates: &CandidateProposal,
    pool: &GlobalToolPool,
) -> Result<LocalToolSet, ToolSpaceError> {
    pool.check_ids(&candidates.ids)?;
    if action.is_retrieve() {
        Ok(LocalToolSet {
            ids: local.ids.union(&candidates.ids).copied().collect(),
            generation: local.generation + 1,
        })
    } else {
        Ok(local.clone())
    }
}

/// Proposes candidate tools from the global pool given the current reasoning.
///
/// Implementations run concurrently with the act policy and must only read
/// their inputs.
#[async_trait]
pub trait CandidateProposer: Send + Sync {
    async fn propose(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError>;
}

pub async fn propose_candidates(
    reasoning: &ReasoningTrace,
    pool: &GlobalToolPool,
    k: usize,
    proposer: &dyn CandidateProposer,
) -> Result<CandidateProposal, ToolSpaceError> {
    if k == 0 {
        return Err(ToolSpaceError::ZeroCap);
    }
    if pool.is_empty() {
        return Err(ToolSpaceError::EmptyPool);
    }
    let mut proposal = proposer.propose(reasoning, pool, k).await?;
    pool.check_ids(&proposal.ids)?;
    proposal.scores.retain(|id, _| proposal.ids.contains(id));
    Ok(proposal)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "i", "if", "in", "is", "it",
    "of", "on", "or", "so", "that", "the", "this", "to", "we", "with",
];

/// Lowercased alphanumeric tokens, minus a short stopword list.
pub fn lexical_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Deterministic stand-in for the auxiliary model.
///
/// Scores each tool by the fraction of its name+description tokens that occur
/// in the reasoning, keeps positive scores, and returns the top `k` with ties
/// broken by ascending tool name.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalProposer;

impl LexicalProposer {
    pub fn score(reasoning_tokens: &BTreeSet<String>, spec: &ToolSpec) -> f64 {
        let tool_tokens = lexical_tokens(&format!("{} {}", spec.name, spec.description));
        if tool_tokens.is_empty() {
            return 0.0;
        }
        let shared = tool_tokens.intersection(reasoning_tokens).count();
        shared as f64 / tool_tokens.len() as f64
    }

    pub fn rank(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> CandidateProposal {
        let tokens = lexical_tokens(&reasoning.text);
        let mut scored: Vec<(f64, &str, ToolId)> = pool
            .iter()
            .map(|(id, spec)| (Self::score(&tokens, spec), spec.name.as_str(), id))
            .filter(|(s, _, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored.truncate(k);
        CandidateProposal {
            ids: scored.iter().map(|(_, _, id)| *id).collect(),
            scores: scored.iter().map(|(s, _, id)| (*id, *s)).collect(),
            propose_duration: 0.0,
        }
    }
}

#[async_trait]
impl CandidateProposer for LexicalProposer {
    async fn propose(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError> {
        Ok(self.rank(reasoning, pool, k))
    }
}

/// Always proposes the same tools, by name. Used by scripted runs.
#[derive(Debug, Clone, Default)]
pub struct FixedProposer {
    pub names: Vec<String>,
}

impl FixedProposer {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }
}

#[async_trait]
impl CandidateProposer for FixedProposer {
    async fn propose(
        &self,
        _reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError> {
        let ids = self
            .names
            .iter()
            .take(k)
            .map(|n| {
                pool.resolve(n)
                    .ok_or_else(|| ToolSpaceError::UnknownToolName(n.clone()))
            })
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(CandidateProposal::from_ids(ids))
    }
}

/// Wraps a proposer with a synthetic latency of `base + per_tool * |pool|`
/// seconds, slept on the given clock.
pub struct DelayedProposer<P> {
    pub inner: P,
    pub base: f64,
    pub per_tool: f64,
    pub clock: crate::clock::SharedClock,
}

#[async_trait]
impl<P: CandidateProposer> CandidateProposer for DelayedProposer<P> {
    async fn propose(
        &self,
        reasoning: &ReasoningTrace,
        pool: &GlobalToolPool,
        k: usize,
    ) -> Result<CandidateProposal, ToolSpaceError> {
        let delay = self.base + self.per_tool * pool.len() as f64;
        self.clock.sleep_secs(delay).await;
        self.inner.propose(reasoning, pool, k).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamKind, ParamSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool_of(names: &[&str]) -> GlobalToolPool {
        GlobalToolPool::from_specs(names.iter().map(|n| ToolSpec::new(*n, format!("does {n}"))))
            .unwrap()
    }

    #[test]
    fn register_and_duplicate() {
        let mut pool = GlobalToolPool::new();
        let id = pool
            .register(
                ToolSpec::new("get_weather", "Current weather")
                    .param(ParamSpec::new("city", ParamKind::String)),
            )
            .unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.resolve("get_weather"), Some(id));
        assert!(matches!(
            pool.register(ToolSpec::new("get_weather", "again")),
            Err(ToolSpaceError::DuplicateName(_))
        ));
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn name_index_is_bijective() {
        let names: Vec<String> = (0..40).map(|i| format!("tool_{i}")).collect();
        let pool = GlobalToolPool::from_specs(names.iter().map(|n| ToolSpec::new(n, "x"))).unwrap();
        for name in &names {
            let id = pool.resolve(name).unwrap();
            // linear scan agrees with the index
            let scanned: Vec<_> = pool
                .iter()
                .filter(|(_, s)| &s.name == name)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(scanned, vec![id]);
        }
        let distinct: BTreeSet<_> = names.iter().map(|n| pool.resolve(n).unwrap()).collect();
        assert_eq!(distinct.len(), names.len());
    }

    #[test]
    fn update_local_branches() {
        let pool = pool_of(&["t0", "t1", "t2", "t3"]);
        let local = LocalToolSet::new([ToolId(1)]);
        let cands = CandidateProposal::from_ids([ToolId(2)]);
        let same = update_local(&local, &AgentAction::speak("hi"), &cands, &pool).unwrap();
        assert_eq!(same, local);
        let cands = CandidateProposal::from_ids([ToolId(2), ToolId(3)]);
        let grown = update_local(&local, &AgentAction::Retrieve, &cands, &pool).unwrap();
        assert_eq!(grown.ids, BTreeSet::from([ToolId(1), ToolId(2), ToolId(3)]));
        assert_eq!(grown.generation, 1);
    }

    #[test]
    fn update_local_rejects_unknown_candidates() {
        let pool = pool_of(&["a"]);
        let err = update_local(
            &LocalToolSet::default(),
            &AgentAction::Retrieve,
            &CandidateProposal::from_ids([ToolId(9)]),
            &pool,
        );
        assert!(matches!(err, Err(ToolSpaceError::UnknownTool(ToolId(9)))));
    }

    #[test]
    fn overlapping_union_matches_brute_force() {
        let pool = GlobalToolPool::from_specs((0..12).map(|i| ToolSpec::new(format!("t{i}"), "x")))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let s: Vec<u32> = (0..12).filter(|_| rng.gen_bool(0.4)).collect();
            let c: Vec<u32> = (0..12).filter(|_| rng.gen_bool(0.4)).collect();
            let local = LocalToolSet::new(s.iter().map(|i| ToolId(*i)));
            let out = update_local(
                &local,
                &AgentAction::Retrieve,
                &CandidateProposal::from_ids(c.iter().map(|i| ToolId(*i))),
                &pool,
            )
            .unwrap();
            let mut expected: Vec<u32> = s.clone();
            for x in &c {
                if !expected.contains(x) {
                    expected.push(*x);
                }
            }
            assert_eq!(out.ids.len(), expected.len());
            assert!(expected.iter().all(|x| out.ids.contains(&ToolId(*x))));
        }
    }

    #[tokio::test]
    async fn lexical_single_member() {
        let mut pool = GlobalToolPool::new();
        let id = pool
            .register(ToolSpec::new("get_weather", "Current weather for a city"))
            .unwrap();
        let p = propose_candidates(
            &ReasoningTrace::new("the user asks about weather"),
            &pool,
            3,
            &LexicalProposer,
        )
        .await
        .unwrap();
        assert_eq!(p.ids, BTreeSet::from([id]));
    }

    #[tokio::test]
    async fn zero_cap_and_empty_pool() {
        let pool = pool_of(&["a"]);
        let r = ReasoningTrace::new("a");
        assert!(matches!(
            propose_candidates(&r, &pool, 0, &LexicalProposer).await,
            Err(ToolSpaceError::ZeroCap)
        ));
        assert!(matches!(
            propose_candidates(&r, &GlobalToolPool::new(), 1, &LexicalProposer).await,
            Err(ToolSpaceError::EmptyPool)
        ));
    }

    /// Exhaustive reference: score every tool independently and sort.
    fn brute_force_top_k(reasoning: &str, pool: &GlobalToolPool, k: usize) -> Vec<ToolId> {
        let r: BTreeSet<String> = lexical_tokens(reasoning);
        let mut all = Vec::new();
        for (id, spec) in pool.iter() {
            let words = lexical_tokens(&(spec.name.clone() + " " + &spec.description));
            let hits = words.iter().filter(|w| r.contains(*w)).count();
            if hits > 0 {
                all.push((hits as f64 / words.len() as f64, spec.name.clone(), id));
            }
        }
        // selection sort: highest score, then smallest name
        let mut out = Vec::new();
        while out.len() < k && !all.is_empty() {
            let mut best = 0;
            for i in 1..all.len() {
                let better =
                    all[i].0 > all[best].0 || (all[i].0 == all[best].0 && all[i].1 < all[best].1);
                if better {
                    best = i;
                }
            }
            out.push(all.remove(best).2);
        }
        out
    }

    #[test]
    fn lexical_top_k_matches_exhaustive_scoring() {
        let vocab = [
            "weather", "stock", "price", "flight", "hotel", "music", "news", "city", "date",
            "review", "map", "route",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let pool = GlobalToolPool::from_specs((0..20).map(|i| {
                let words: Vec<&str> = (0..rng.gen_range(2..6))
                    .map(|_| vocab[rng.gen_range(0..vocab.len())])
                    .collect();
                ToolSpec::new(format!("tool_{trial}_{i}"), words.join(" "))
            }))
            .unwrap();
            let reasoning: Vec<&str> = (0..6)
                .map(|_| vocab[rng.gen_range(0..vocab.len())])
                .collect();
            let reasoning = reasoning.join(" ");
            let got = LexicalProposer.rank(&ReasoningTrace::new(&reasoning), &pool, 5);
            let want = brute_force_top_k(&reasoning, &pool, 5);
            assert_eq!(got.ids, want.iter().copied().collect::<BTreeSet<_>>());
            assert!(got.scores.keys().all(|id| got.ids.contains(id)));
        }
    }

    #[test]
    fn lexical_is_pure() {
        let pool = pool_of(&["alpha", "beta", "gamma"]);
        let r = ReasoningTrace::new("does alpha then beta");
        assert_eq!(
            LexicalProposer.rank(&r, &pool, 2),
            LexicalProposer.rank(&r, &pool, 2)
        );
    }

    #[test]
    fn pool_json_round_trip() {
        let pool = pool_of(&["a", "b"]);
        let again = GlobalToolPool::from_json(&pool.to_json()).unwrap();
        assert_eq!(again.resolve("b"), pool.resolve("b"));
    }
}
