//! Synthetic difficulty-graded binary classification data.
//!
//! Normal samples are drawn from `N(-m0 * e1, sigma^2 I)`; each fracture
//! subtype `f` from `N(+m_f * e1, sigma^2 I)` with `m_f = (score_f / 100) * m_max`.
//! Easier subtypes (higher score) sit farther from the decision boundary.
//! This margin-proportional-to-score mapping is a modelling choice that stands
//! in for image difficulty.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{FineLabel, ScoreTable, NORMAL_LABEL};
use crate::seed::{Purpose, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Binary label; `true` exactly when the fine label is not `normal`.
    pub positive: bool,
    pub fine_label: FineLabel,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let dim = records.first().ok_or(Error::EmptyDataset)?.features.len();
        for r in &records {
            if r.features.len() != dim {
                return Err(Error::ShapeError {
                    expected: dim,
                    actual: r.features.len(),
                });
            }
            if r.positive == r.fine_label.is_normal() {
                return Err(Error::ProfileError(format!(
                    "record `{}`: label {} inconsistent with fine label `{}`",
                    r.id, r.positive as u8, r.fine_label
                )));
            }
        }
        Ok(Dataset { dim, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.positive).collect()
    }

    pub fn fine_labels(&self) -> Vec<FineLabel> {
        self.records.iter().map(|r| r.fine_label.clone()).collect()
    }

    pub fn n_positive(&self) -> usize {
        self.records.iter().filter(|r| r.positive).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// Shape of the feature space shared by every class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dim: usize,
    pub sigma: f64,
    /// Margin of a score-100 subtype.
    pub max_margin: f64,
    /// Distance of the normal class mean from the origin.
    pub normal_margin: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            dim: 16,
            sigma: 1.0,
            max_margin: 2.0,
            normal_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: FineLabel,
    pub count: usize,
    /// Signed position of the class mean along the first axis.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub classes: Vec<ClassSpec>,
    pub dim: usize,
    pub sigma: f64,
}

/// Training counts per class (normal, a..f): 1392 images, 592 fractures.
pub const COHORT_TRAIN_COUNTS: [(&str, usize); 7] = [
    ("normal", 800),
    ("a", 88),
    ("b", 340),
    ("c", 84),
    ("d", 11),
    ("e", 42),
    ("f", 27),
];

/// Test counts per class: 473 images, 73 fractures.
pub const COHORT_TEST_COUNTS: [(&str, usize); 7] = [
    ("normal", 400),
    ("a", 10),
    ("b", 44),
    ("c", 9),
    ("d", 2),
    ("e", 4),
    ("f", 4),
];

impl ClassProfile {
    /// Places each class according to its difficulty score.
    pub fn from_counts(
        counts: &[(&str, usize)],
        scores: &ScoreTable,
        geometry: Geometry,
    ) -> Result<Self> {
        let mut classes = Vec::with_capacity(counts.len());
        for &(name, count) in counts {
            let label = FineLabel::from(name);
            let offset = if label.is_normal() {
                -geometry.normal_margin
            } else {
                f64::from(scores.score(&label)?) / 100.0 * geometry.max_margin
            };
            classes.push(ClassSpec {
                label,
                count,
                offset,
            });
        }
        let profile = ClassProfile {
            classes,
            dim: geometry.dim,
            sigma: geometry.sigma,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn train_default(scores: &ScoreTable, geometry: Geometry) -> Result<Self> {
        ClassProfile::from_counts(&COHORT_TRAIN_COUNTS, scores, geometry)
    }

    pub fn test_default(scores: &ScoreTable, geometry: Geometry) -> Result<Self> {
        ClassProfile::from_counts(&COHORT_TEST_COUNTS, scores, geometry)
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::ProfileError(format!("dimension {} < 2", self.dim)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::ProfileError(format!("invalid noise sigma {}", self.sigma)));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(&c.label) {
                return Err(Error::ProfileError(format!("duplicate class `{}`", c.label)));
            }
            if !c.offset.is_finite() {
                return Err(Error::ProfileError(format!("non-finite margin for `{}`", c.label)));
            }
        }
        let has = |normal: bool| {
            self.classes
                .iter()
                .any(|c| c.count > 0 && c.label.is_normal() == normal)
        };
        if !has(true) || !has(false) {
            return Err(Error::ProfileError(
                "need at least one normal and one non-normal sample".into(),
            ));
        }
        Ok(())
    }
}

/// Which half of the experiment a dataset belongs to; selects the random
/// stream and the id prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn purpose(self) -> Purpose {
        match self {
            Split::Train => Purpose::TrainData,
            Split::Test => Purpose::TestData,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Draws exactly `count` samples per class, classes in profile order. Class
/// `k` uses stream `(TrainData|TestData, k, 0)`.
pub fn generate(profile: &ClassProfile, seed: SeedSpec, split: Split) -> Result<Dataset> {
    profile.validate()?;
    let per_class: Vec<Vec<(FineLabel, Vec<f64>)>> = profile
        .classes
        .par_iter()
        .enumerate()
        .map(|(k, class)| {
            let mut rng = seed.stream(split.purpose(), k as u64, 0);
            (0..class.count)
                .map(|_| {
                    let features = (0..profile.dim)
                        .map(|j| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let mean = if j == 0 { class.offset } else { 0.0 };
                            mean + profile.sigma * z
                        })
                        .collect();
                    (class.label.clone(), features)
                })
                .collect()
        })
        .collect();
    let records = per_class
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, (fine_label, features))| SampleRecord {
            id: format!("{}-{:05}", split.prefix(), i),
            positive: !fine_label.is_normal(),
            fine_label,
            features,
        })
        .collect();
    Dataset::new(records)
}

/// Writes `id,y,f,x0..x{d-1}` CSV with LF line endings. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_manifest(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["id".to_string(), "y".to_string(), "f".to_string()];
    header.extend((0..dataset.dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for r in &dataset.records {
        let mut row = Vec::with_capacity(3 + r.features.len());
        row.push(r.id.clone());
        row.push(if r.positive { "1" } else { "0" }.to_string());
        row.push(r.fine_label.to_string());
        row.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::io("<manifest>", std::io::Error::other(e))
}

/// Reads a manifest, validating the header, the label invariant, fine labels
/// against `scores`, feature dimension and id uniqueness. `source` is only
/// used in error messages.
pub fn read_manifest(reader: impl Read, source: &str, scores: &ScoreTable) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::ManifestParseError {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 4 || &header[0] != "id" || &header[1] != "y" || &header[2] != "f" {
        return Err(parse_err(1, "header must be `id,y,f,x0,...`".into()));
    }
    for (j, name) in header.iter().skip(3).enumerate() {
        if name != format!("x{j}") {
            return Err(parse_err(1, format!("expected column `x{j}`, found `{name}`")));
        }
    }
    let dim = header.len() - 3;
    let mut ids = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[0].to_string();
        if !ids.insert(id.clone()) {
            return Err(parse_err(line, format!("duplicate id `{id}`")));
        }
        let positive = match &row[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, format!("label must be 0 or 1, got `{other}`"))),
        };
        let fine_label = FineLabel::from(&row[2]);
        if !scores.contains(&fine_label) {
            return Err(Error::UnknownFineLabel(fine_label.to_string()));
        }
        if positive == fine_label.is_normal() {
            return Err(parse_err(
                line,
                format!(
                    "y = {} contradicts fine label `{fine_label}` (y = 0 iff f = {NORMAL_LABEL})",
                    positive as u8
                ),
            ));
        }
        let features = row
            .iter()
            .skip(3)
            .enumerate()
            .map(|(j, v)| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_err(line, format!("x{j}: invalid value `{v}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if features.len() != dim {
            return Err(parse_err(line, format!("expected {dim} features")));
        }
        records.push(SampleRecord {
            id,
            positive,
            fine_label,
            features,
        });
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_train(seed: u64) -> Dataset {
        let profile =
            ClassProfile::train_default(&ScoreTable::elbow_default(), Geometry::default()).unwrap();
        generate(&profile, SeedSpec::new(seed), Split::Train).unwrap()
    }

    #[test]
    fn default_training_profile_counts() {
        let data = default_train(1);
        assert_eq!(data.len(), 1392);
        assert_eq!(data.n_positive(), 592);
        assert_eq!(data.dim, 16);
        let test_profile =
            ClassProfile::test_default(&ScoreTable::elbow_default(), Geometry::default()).unwrap();
        let test = generate(&test_profile, SeedSpec::new(1), Split::Test).unwrap();
        assert_eq!((test.len(), test.n_positive()), (473, 73));
        assert_ne!(test.records[0].id, data.records[0].id);
    }

    #[test]
    fn margins_follow_scores() {
        let profile =
            ClassProfile::train_default(&ScoreTable::elbow_default(), Geometry::default()).unwrap();
        let offset = |name: &str| {
            profile
                .classes
                .iter()
                .find(|c| c.label.as_str() == name)
                .unwrap()
                .offset
        };
        assert!((offset("e") / offset("f") - 9.0).abs() < 1e-12);
        assert_eq!(offset("normal"), -1.0);
        assert!((offset("e") - 1.8).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(default_train(5), default_train(5));
        assert_ne!(default_train(5), default_train(6));
    }

    #[test]
    fn class_means_converge() {
        let data = default_train(11);
        let profile =
            ClassProfile::train_default(&ScoreTable::elbow_default(), Geometry::default()).unwrap();
        for class in profile.classes.iter().filter(|c| c.count > 0) {
            let xs: Vec<&SampleRecord> = data
                .records
                .iter()
                .filter(|r| r.fine_label == class.label)
                .collect();
            let n = xs.len() as f64;
            for j in 0..data.dim {
                let mean = xs.iter().map(|r| r.features[j]).sum::<f64>() / n;
                let target = if j == 0 { class.offset } else { 0.0 };
                assert!(
                    (mean - target).abs() <= 4.0 * profile.sigma / n.sqrt(),
                    "class {} dim {j}: {mean} vs {target}",
                    class.label
                );
            }
        }
    }

    #[test]
    fn profile_validation() {
        let scores = ScoreTable::elbow_default();
        let g = Geometry::default();
        assert!(matches!(
            ClassProfile::from_counts(&[("normal", 5)], &scores, g),
            Err(Error::ProfileError(_))
        ));
        assert!(matches!(
            ClassProfile::from_counts(&[("normal", 5), ("a", 0)], &scores, g),
            Err(Error::ProfileError(_))
        ));
        assert!(matches!(
            ClassProfile::from_counts(&[("normal", 5), ("a", 1)], &scores, Geometry { dim: 1, ..g }),
            Err(Error::ProfileError(_))
        ));
        assert!(matches!(
            ClassProfile::from_counts(&[("normal", 5), ("zz", 1)], &scores, g),
            Err(Error::UnknownFineLabel(_))
        ));
    }

    #[test]
    fn manifest_roundtrip() {
        let data = default_train(2);
        let mut buf = Vec::new();
        write_manifest(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,y,f,x0,x1,"));
        assert!(!text.contains('\r'));
        let back = read_manifest(buf.as_slice(), "mem", &ScoreTable::elbow_default()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn manifest_rejects_label_contradiction() {
        let text = "id,y,f,x0,x1\ns1,0,normal,0.1,0.2\ns2,1,normal,0.1,0.2\n";
        match read_manifest(text.as_bytes(), "m.csv", &ScoreTable::elbow_default()) {
            Err(Error::ManifestParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_unknown_label() {
        let text = "id,y,f,x0,x1\ns1,1,q,0.1,0.2\n";
        assert!(matches!(
            read_manifest(text.as_bytes(), "m.csv", &ScoreTable::elbow_default()),
            Err(Error::UnknownFineLabel(l)) if l == "q"
        ));
    }

    #[test]
    fn manifest_reports_bad_rows() {
        let scores = ScoreTable::elbow_default();
        let cases = [
            ("id,y,f,x0,x1\ns1,2,a,0.1,0.2\n", 2),
            ("id,y,f,x0,x1\ns1,1,a,0.1,zz\n", 2),
            ("id,y,f,x0,x1\ns1,1,a,0.1,0.2\ns1,1,a,0.1,0.2\n", 3),
            ("id,y,f,x0,x1\ns1,1,a,0.1,0.2\ns2,1,a,0.1\n", 3),
            ("id,label,f,x0,x1\n", 1),
            ("id,y,f,x1,x0\n", 1),
        ];
        for (text, expected_line) in cases {
            match read_manifest(text.as_bytes(), "m.csv", &scores) {
                Err(Error::ManifestParseError { line, .. }) => {
                    assert_eq!(line, expected_line, "{text}")
                }
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }
}
