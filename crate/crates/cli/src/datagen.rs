use std::collections::BTreeSet;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::de::DeserializeOwned;
use voxkit_core::clock::MonotonicClock;
use voxkit_core::datagen::{
    compose_manifest, default_tool_categories, process_item, tool_necessity, CorpusRecord,
    DatasetManifest, ItemOutcome, LlmStrategy, MixRatio, NecessityScorer, RetainedRecord,
    SampleMeta, Strategies, TemplateStub, TraceCompressor, TraceGenerator, TraceRefiner,
    TraceScorer,
};
use voxkit_core::io::{atomic_write, from_jsonl, write_jsonl};
use voxkit_core::policy::HttpBackend;

use crate::config::{Config, StrategySection};
use crate::{DatagenArgs, Failure, Stage};

const DEFAULT_CONCURRENCY: usize = 4;

trait FullStrategy:
    TraceGenerator + TraceScorer + TraceRefiner + TraceCompressor + NecessityScorer
{
}

impl<T> FullStrategy for T where
    T: TraceGenerator + TraceScorer + TraceRefiner + TraceCompressor + NecessityScorer
{
}

fn strategy(config: &Config) -> Result<Box<dyn FullStrategy>, Failure> {
    match &config.strategy {
        StrategySection::Stub { score } => Ok(Box::new(TemplateStub { score: *score })),
        StrategySection::Llm => {
            let backend = HttpBackend::new(config.http_backend()?, MonotonicClock::shared())
                .map_err(Failure::usage)?;
            let mut llm = LlmStrategy::new(Arc::new(backend));
            if let Some(n) = config.pipeline.think_max_words {
                llm.think_max_words = n;
            }
            Ok(Box::new(llm))
        }
    }
}

fn read_input<T: DeserializeOwned>(args: &DatagenArgs) -> Result<Vec<T>, Failure> {
    let path = &args.corpus;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    from_jsonl(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Default, PartialEq)]
pub struct CotSummary {
    pub retained: Vec<RetainedRecord>,
    pub discarded: usize,
    pub not_needed: usize,
    pub skipped: usize,
}

async fn cot(
    records: &[CorpusRecord],
    strategies: &Strategies<'_>,
    config: &Config,
    concurrency: usize,
) -> CotSummary {
    let results: Vec<_> = stream::iter(records.iter().map(|r| async move {
        (r, process_item(r, strategies, &config.pipeline).await)
    }))
    .buffered(concurrency)
    .collect()
    .await;
    let mut summary = CotSummary::default();
    for (record, result) in results {
        match result {
            Ok(ItemOutcome::Retained(r)) => summary.retained.push(r),
            Ok(ItemOutcome::Discarded { .. }) => summary.discarded += 1,
            Ok(ItemOutcome::NotToolNecessary { .. }) => summary.not_needed += 1,
            Err(e) => {
                eprintln!("skipping {}: {e}", record.id);
                summary.skipped += 1;
            }
        }
    }
    summary.retained.sort_by(|a, b| a.id.cmp(&b.id));
    summary
}

async fn necessity(
    records: &[CorpusRecord],
    scorer: &dyn NecessityScorer,
    min: u8,
    concurrency: usize,
) -> (Vec<CorpusRecord>, usize, usize) {
    let results: Vec<_> = stream::iter(
        records
            .iter()
            .map(|r| async move { (r, tool_necessity(&r.query, scorer).await) }),
    )
    .buffered(concurrency)
    .collect()
    .await;
    let (mut kept, mut dropped, mut skipped) = (Vec::new(), 0, 0);
    for (record, result) in results {
        match result {
            Ok(n) if n >= min => kept.push(record.clone()),
            Ok(_) => dropped += 1,
            Err(e) => {
                eprintln!("skipping {}: {e}", record.id);
                skipped += 1;
            }
        }
    }
    (kept, dropped, skipped)
}

fn compose(
    samples: &[SampleMeta],
    ratio: MixRatio,
    tools: &BTreeSet<String>,
) -> Result<(DatasetManifest, f64, f64), Failure> {
    let manifest = compose_manifest(samples, ratio, tools).map_err(Failure::usage)?;
    let tool_hours: f64 = manifest
        .entries
        .iter()
        .filter(|e| tools.contains(&e.category))
        .map(|e| e.duration_hours)
        .sum();
    let general_hours = manifest.total_hours() - tool_hours;
    Ok((manifest, tool_hours, general_hours))
}

pub async fn run(args: DatagenArgs) -> Result<(), Failure> {
    let config = Config::load(args.config.as_deref())?;
    config.pipeline.validate().map_err(Failure::usage)?;
    let concurrency = args
        .concurrency
        .or(config.concurrency)
        .unwrap_or(DEFAULT_CONCURRENCY)
        .max(1);
    match args.stage {
        Stage::Cot => {
            let records: Vec<CorpusRecord> = read_input(&args)?;
            let s = strategy(&config)?;
            let strategies = Strategies {
                generator: &*s,
                scorer: &*s,
                refiner: Some(&*s),
                compressor: Some(&*s),
                necessity: None,
            };
            let summary = cot(&records, &strategies, &config, concurrency).await;
            write_jsonl(&args.out, &summary.retained).map_err(Failure::runtime)?;
            let attempts: u32 = summary.retained.iter().map(|r| r.attempts).sum();
            let mean = if summary.retained.is_empty() {
                0.0
            } else {
                f64::from(attempts) / summary.retained.len() as f64
            };
            println!(
                "cot: {} items, retained {}, discarded {}, skipped {}, mean attempts {mean:.2}",
                records.len(),
                summary.retained.len(),
                summary.discarded,
                summary.skipped
            );
        }
        Stage::Necessity => {
            let records: Vec<CorpusRecord> = read_input(&args)?;
            let s = strategy(&config)?;
            let (kept, dropped, skipped) =
                necessity(&records, &*s, config.pipeline.necessity_min, concurrency).await;
            write_jsonl(&args.out, &kept).map_err(Failure::runtime)?;
            println!(
                "necessity: {} items, kept {}, dropped {dropped}, skipped {skipped}",
                records.len(),
                kept.len()
            );
        }
        Stage::Compose => {
            let samples: Vec<SampleMeta> = read_input(&args)?;
            let label = args.ratio.as_ref().or(config.ratio.as_ref());
            let ratio: MixRatio = match label {
                Some(r) => r.parse().map_err(Failure::usage)?,
                None => MixRatio::new(1.0, 1.0).expect("valid ratio"),
            };
            let tools = match &config.tool_categories {
                Some(list) => list.iter().cloned().collect(),
                None => default_tool_categories(),
            };
            let (manifest, tool_h, general_h) = compose(&samples, ratio, &tools)?;
            let json = serde_json::to_string_pretty(&manifest).map_err(Failure::runtime)?;
            atomic_write(&args.out, json.as_bytes()).map_err(Failure::runtime)?;
            let achieved = if tool_h > 0.0 { general_h / tool_h } else { 0.0 };
            println!(
                "compose {}: {} samples, {:.2} h (tool {tool_h:.2} h, general {general_h:.2} h, achieved 1:{achieved:.3})",
                manifest.ratio_label,
                manifest.total_samples(),
                manifest.total_hours()
            );
        }
    }
    Ok(())
}
