use voxkit_core::io::atomic_write;
use voxkit_core::judge::{aggregate, score_items, Capability, CorpusItem};

use crate::{Failure, JudgeArgs};

/// Parses corpus lines, reporting the first bad one by line number.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusItem>, Failure> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Failure::Usage(format!("corpus line {}: {m}", i + 1));
        let item: CorpusItem = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        item.capability
            .parse::<Capability>()
            .map_err(|e| bad(e.to_string()))?;
        items.push(item);
    }
    Ok(items)
}

pub fn run(args: JudgeArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.corpus)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.corpus.display())))?;
    let items = parse_corpus(&text)?;
    let scored = score_items(&items).map_err(Failure::usage)?;
    let metrics = aggregate(&scored);
    if let Some(out) = &args.out {
        let lines: String = scored.iter().map(|s| s.verdict.to_line() + "\n").collect();
        atomic_write(out, lines.as_bytes()).map_err(Failure::runtime)?;
    }
    let json = serde_json::to_string_pretty(&metrics).map_err(Failure::runtime)?;
    if let Some(path) = &args.metrics {
        atomic_write(path, json.as_bytes()).map_err(Failure::runtime)?;
    }
    println!("{json}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_line_is_reported() {
        let ok = r#"{"capability": "single_task", "target": "f()", "output": "f()"}"#;
        let text = format!("{ok}\n\n{{broken\n");
        match parse_corpus(&text) {
            Err(Failure::Usage(m)) => assert!(m.starts_with("corpus line 3"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = format!("{ok}\n{}", ok.replace("single_task", "juggling"));
        match parse_corpus(&text) {
            Err(Failure::Usage(m)) => assert!(m.starts_with("corpus line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_corpus(ok).unwrap().len(), 1);
    }
}
