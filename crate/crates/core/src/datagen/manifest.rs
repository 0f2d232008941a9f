use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DatagenError;

/// Tool-interaction categories of the reference corpus.
pub const DEFAULT_TOOL_CATEGORIES: [&str; 9] = [
    "apigen-mt",
    "dialog",
    "multi-tool-select",
    "obs",
    "obs-searchTools",
    "para-filled",
    "parallel-call",
    "tool-gap",
    "tool-select",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub category: String,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub category: String,
    pub sample_count: usize,
    pub duration_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub ratio_label: String,
    pub entries: Vec<ManifestEntry>,
    /// Ids of all selected samples, in selection order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected_ids: Vec<String>,
}

impl DatasetManifest {
    pub fn total_samples(&self) -> usize {
        self.entries.iter().map(|e| e.sample_count).sum()
    }

    pub fn total_hours(&self) -> f64 {
        self.entries.iter().map(|e| e.duration_hours).sum()
    }

    pub fn entry(&self, category: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.category == category)
    }
}

/// Tool-to-general duration ratio such as `1:0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRatio {
    pub tool: f64,
    pub general: f64,
}

impl MixRatio {
    pub fn new(tool: f64, general: f64) -> Result<Self, DatagenError> {
        if !(tool > 0.0 && tool.is_finite() && general >= 0.0 && general.is_finite()) {
            return Err(DatagenError::InvalidConfig(format!(
                "bad ratio {tool}:{general}"
            )));
        }
        Ok(Self { tool, general })
    }

    pub fn general_per_tool(&self) -> f64 {
        self.general / self.tool
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.tool, self.general)
    }
}

impl std::str::FromStr for MixRatio {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatagenError::InvalidConfig(format!("ratio `{s}` is not of the form a:b"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }
}

/// Keeps every tool-category sample and adds general samples in id order
/// until their duration reaches `ratio × tool duration`.
pub fn compose_manifest(
    samples: &[SampleMeta],
    ratio: MixRatio,
    tool_categories: &BTreeSet<String>,
) -> Result<DatasetManifest, DatagenError> {
    if let Some(bad) = samples
        .iter()
        .find(|s| !(s.duration_seconds >= 0.0 && s.duration_seconds.is_finite()))
    {
        return Err(DatagenError::InvalidInput(format!(
            "sample {} has a bad duration",
            bad.id
        )));
    }
    let mut totals: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    let mut selected_ids = Vec::new();
    let mut tool_seconds = 0.0;
    let mut general: Vec<&SampleMeta> = Vec::new();
    for s in samples {
        totals.entry(&s.category).or_insert((0, 0.0));
        if tool_categories.contains(&s.category) {
            tool_seconds += s.duration_seconds;
            let t = totals.get_mut(s.category.as_str()).expect("inserted");
            t.0 += 1;
            t.1 += s.duration_seconds;
            selected_ids.push(s.id.clone());
        } else {
            general.push(s);
        }
    }
    general.sort_by(|a, b| a.id.cmp(&b.id));

    let quota = ratio.general_per_tool() * tool_seconds;
    let available: f64 = general.iter().map(|s| s.duration_seconds).sum();
    // tolerance absorbs float summation noise only
    let eps = 1e-9 * quota.max(1.0);
    if available + eps < quota {
        return Err(DatagenError::InsufficientData {
            needed_hours: quota / 3600.0,
            available_hours: available / 3600.0,
        });
    }
    let mut taken = 0.0;
    for s in general {
        if taken + eps >= quota {
            break;
        }
        taken += s.duration_seconds;
        let t = totals.get_mut(s.category.as_str()).expect("inserted");
        t.0 += 1;
        t.1 += s.duration_seconds;
        selected_ids.push(s.id.clone());
    }

    Ok(DatasetManifest {
        ratio_label: ratio.label(),
        entries: totals
            .into_iter()
            .map(|(category, (n, secs))| ManifestEntry {
                category: category.to_string(),
                sample_count: n,
                duration_hours: secs / 3600.0,
            })
            .collect(),
        selected_ids,
    })
}

pub fn default_tool_categories() -> BTreeSet<String> {
    DEFAULT_TOOL_CATEGORIES
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Reference per-category composition: `(category, samples 1:1, hours 1:1,
/// samples 1:0.5, hours 1:0.5)`.
pub const REFERENCE_COMPOSITION: [(&str, usize, f64, usize, f64); 17] = [
    ("ai2_arc-challenge", 334, 3.57, 173, 1.88),
    ("ai2_arc-easy", 338, 3.15, 181, 1.68),
    ("apigen-mt", 791, 43.26, 791, 43.26),
    ("conversation", 3391, 37.65, 1673, 18.52),
    ("course", 5890, 43.58, 2975, 21.97),
    ("dialog", 5582, 26.62, 5582, 26.62),
    ("gsm8k", 543, 5.73, 271, 2.84),
    ("multi-conversation", 944, 12.50, 469, 6.15),
    ("multi-tool-select", 1486, 5.16, 1486, 5.16),
    ("obs", 2465, 22.46, 2465, 22.46),
    ("obs-searchTools", 224, 2.05, 224, 2.05),
    ("para-filled", 1409, 4.45, 1409, 4.45),
    ("parallel-call", 1144, 2.52, 1144, 2.52),
    ("sciq", 293, 2.83, 155, 1.50),
    ("tool-gap", 467, 0.62, 467, 0.62),
    ("tool-select", 1237, 1.92, 1237, 1.92),
    ("who-conversation", 13, 0.07, 5, 0.02),
];

/// Per-sample corpus consistent with [`REFERENCE_COMPOSITION`].
///
/// Durations are uniform within a category and subset. General samples that
/// survive the 1:0.5 mix get lower ids than the rest; inside each subset the
/// last sample of every category sits at the very end, largest category last,
/// so a duration cut near the end removes at most one sample per category.
pub fn reference_corpus() -> Vec<SampleMeta> {
    let tool = default_tool_categories();
    let mut out = Vec::new();
    for &(cat, n, hours, _, _) in &REFERENCE_COMPOSITION {
        if tool.contains(cat) {
            let d = hours * 3600.0 / n as f64;
            out.extend((0..n).map(|i| SampleMeta {
                id: format!("tool-{cat}-{i:05}"),
                category: cat.to_string(),
                duration_seconds: d,
            }));
        }
    }

    let general: Vec<_> = REFERENCE_COMPOSITION
        .iter()
        .filter(|r| !tool.contains(r.0))
        .collect();
    // (subset, position from end, category size, category, duration)
    let mut keyed: Vec<(u8, usize, usize, &str, f64)> = Vec::new();
    for &&(cat, n1, h1, n05, h05) in &general {
        let d_a = h05 * 3600.0 / n05 as f64;
        let d_b = (h1 - h05) * 3600.0 / (n1 - n05) as f64;
        keyed.extend((0..n05).map(|i| (0u8, n05 - 1 - i, n05, cat, d_a)));
        keyed.extend((0..n1 - n05).map(|i| (1u8, n1 - n05 - 1 - i, n1 - n05, cat, d_b)));
    }
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(b.3))
    });
    out.extend(
        keyed
            .into_iter()
            .enumerate()
            .map(|(i, (_, _, _, cat, d))| SampleMeta {
                id: format!("gen-{i:06}"),
                category: cat.to_string(),
                duration_seconds: d,
            }),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, cat: &str, d: f64) -> SampleMeta {
        SampleMeta {
            id: id.into(),
            category: cat.into(),
            duration_seconds: d,
        }
    }

    #[test]
    fn ratio_parsing() {
        let r: MixRatio = "1:0.5".parse().unwrap();
        assert_eq!(r.general_per_tool(), 0.5);
        assert!("1-1".parse::<MixRatio>().is_err());
        assert!("0:1".parse::<MixRatio>().is_err());
    }

    #[test]
    fn prefix_by_id() {
        let tools = ["tool"].iter().map(|s| s.to_string()).collect();
        let samples = vec![
            meta("t1", "tool", 10.0),
            meta("g3", "b", 4.0),
            meta("g1", "a", 4.0),
            meta("g2", "b", 4.0),
        ];
        let m = compose_manifest(&samples, "1:0.5".parse().unwrap(), &tools).unwrap();
        assert_eq!(m.selected_ids, ["t1", "g1", "g2"]);
        assert_eq!(m.entry("b").unwrap().sample_count, 1);
        let m = compose_manifest(&samples, "1:0".parse().unwrap(), &tools).unwrap();
        assert_eq!(m.entry("a").unwrap().sample_count, 0);
        assert!(matches!(
            compose_manifest(&samples, "1:2".parse().unwrap(), &tools),
            Err(DatagenError::InsufficientData { .. })
        ));
    }

    #[test]
    fn reference_corpus_matches_full_column() {
        let corpus = reference_corpus();
        assert_eq!(corpus.len(), 26_551);
        let hours: f64 = corpus.iter().map(|s| s.duration_seconds).sum::<f64>() / 3600.0;
        assert!((hours - 218.14).abs() < 1e-6);
    }
}
