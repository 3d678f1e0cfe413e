//! Dataset manifests: `sample_id,relative_path,label` CSV files.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result, RowIssue};
use crate::io;
use crate::taxonomy::ClassTaxonomy;

pub const MANIFEST_HEADER: [&str; 3] = ["sample_id", "relative_path", "label"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub relative_path: String,
    /// Index into the manifest's taxonomy.
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    taxonomy: ClassTaxonomy,
    samples: Vec<SampleRecord>,
    index: HashMap<String, usize>,
    digest: String,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.taxonomy == other.taxonomy && self.samples == other.samples
    }
}

/// Loads a manifest labelled with the canonical PBC taxonomy.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path, &ClassTaxonomy::canonical())
}

impl DatasetManifest {
    pub fn new(taxonomy: ClassTaxonomy, samples: Vec<SampleRecord>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.sample_id.is_empty() {
                issues.push(RowIssue::Malformed {
                    line: i as u64 + 1,
                    reason: "empty sample_id".into(),
                });
            }
            if s.label >= taxonomy.len() {
                issues.push(RowIssue::UnknownLabel {
                    label: s.label.to_string(),
                    line: i as u64 + 1,
                });
            }
            if let Some(&first) = index.get(&s.sample_id) {
                issues.push(RowIssue::Duplicate {
                    id: s.sample_id.clone(),
                    first_line: first as u64 + 1,
                    line: i as u64 + 1,
                });
            } else {
                index.insert(s.sample_id.clone(), i);
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidRows {
                path: "<manifest>".into(),
                issues,
            });
        }
        let digest = io::sha256_hex(canonical_csv(&taxonomy, &samples).as_bytes());
        Ok(DatasetManifest {
            taxonomy,
            samples,
            index,
            digest,
        })
    }

    pub fn load(path: &Path, taxonomy: &ClassTaxonomy) -> Result<Self> {
        let text = io::read_to_string(path)?;
        Self::parse(&text, taxonomy).map_err(|e| match e {
            Error::InvalidRows { issues, .. } => Error::InvalidRows {
                path: path.to_path_buf(),
                issues,
            },
            other => other,
        })
    }

    /// Parses manifest CSV text. All row problems are collected and reported
    /// together, each with its line number.
    pub fn parse(text: &str, taxonomy: &ClassTaxonomy) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut issues = Vec::new();
        let mut samples = Vec::new();
        let mut first_line: HashMap<String, u64> = HashMap::new();
        let mut saw_header = false;

        for record in reader.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    issues.push(RowIssue::Malformed {
                        line,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if !saw_header {
                saw_header = true;
                let header: Vec<&str> = record.iter().collect();
                if header != MANIFEST_HEADER {
                    issues.push(RowIssue::Malformed {
                        line,
                        reason: format!(
                            "expected header `{}`, found `{}`",
                            MANIFEST_HEADER.join(","),
                            header.join(",")
                        ),
                    });
                    break;
                }
                continue;
            }
            if record.len() != 3 {
                issues.push(RowIssue::Malformed {
                    line,
                    reason: format!("expected 3 fields, found {}", record.len()),
                });
                continue;
            }
            let (id, rel, label) = (&record[0], &record[1], &record[2]);
            if id.is_empty() {
                issues.push(RowIssue::Malformed {
                    line,
                    reason: "empty sample_id".into(),
                });
                continue;
            }
            let Some(label_idx) = taxonomy.index_of(label) else {
                issues.push(RowIssue::UnknownLabel {
                    label: label.to_string(),
                    line,
                });
                continue;
            };
            if let Some(&first) = first_line.get(id) {
                issues.push(RowIssue::Duplicate {
                    id: id.to_string(),
                    first_line: first,
                    line,
                });
                continue;
            }
            first_line.insert(id.to_string(), line);
            samples.push(SampleRecord {
                sample_id: id.to_string(),
                relative_path: rel.to_string(),
                label: label_idx,
            });
        }
        if !saw_header {
            issues.push(RowIssue::Malformed {
                line: 1,
                reason: "missing header".into(),
            });
        }
        if !issues.is_empty() {
            return Err(Error::InvalidRows {
                path: "<manifest>".into(),
                issues,
            });
        }
        Self::new(taxonomy.clone(), samples)
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }

    /// Samples in file order.
    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.index.get(sample_id).map(|&i| &self.samples[i])
    }

    pub fn label_of(&self, sample_id: &str) -> Option<usize> {
        self.get(sample_id).map(|s| s.label)
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.index.contains_key(sample_id)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.taxonomy.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Hex SHA-256 of [`DatasetManifest::canonical_csv`]; independent of row order.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Rows sorted by sample_id, LF line endings.
    pub fn canonical_csv(&self) -> String {
        canonical_csv(&self.taxonomy, &self.samples)
    }

    /// Rows in file order.
    pub fn to_csv(&self) -> String {
        let rows: Vec<&SampleRecord> = self.samples.iter().collect();
        render_csv(&self.taxonomy, &rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_csv().as_bytes())
    }
}

fn canonical_csv(taxonomy: &ClassTaxonomy, samples: &[SampleRecord]) -> String {
    let mut rows: Vec<&SampleRecord> = samples.iter().collect();
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    render_csv(taxonomy, &rows)
}

fn render_csv(taxonomy: &ClassTaxonomy, rows: &[&SampleRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).expect("in-memory write");
    for s in rows {
        w.write_record([
            s.sample_id.as_str(),
            s.relative_path.as_str(),
            taxonomy.name(s.label),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tax() -> ClassTaxonomy {
        ClassTaxonomy::canonical()
    }

    #[test]
    fn parses_three_rows() {
        let m = DatasetManifest::parse(
            "sample_id,relative_path,label\na,x/a.jpg,basophil\nb,x/b.jpg,platelet\nc,x/c.jpg,ig\n",
            &tax(),
        )
        .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.class_counts(), vec![1, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(m.label_of("c"), Some(3));
    }

    #[test]
    fn duplicate_reports_both_lines() {
        let err = DatasetManifest::parse(
            "sample_id,relative_path,label\na,p,basophil\nb,p,ig\na,q,ig\n",
            &tax(),
        )
        .unwrap_err();
        let Error::InvalidRows { issues, .. } = &err else {
            panic!("{err}")
        };
        assert_eq!(
            issues,
            &vec![RowIssue::Duplicate {
                id: "a".into(),
                first_line: 2,
                line: 4
            }]
        );
        let msg = err.to_string();
        assert!(msg.contains("`a`") && msg.contains("line 4") && msg.contains("line 2"));
    }

    #[test]
    fn collects_all_issues() {
        let err = DatasetManifest::parse(
            "sample_id,relative_path,label\na,p,basophil\nb,p,dragon\nc,p\n",
            &tax(),
        )
        .unwrap_err();
        let Error::InvalidRows { issues, .. } = err else {
            panic!()
        };
        assert_eq!(issues.len(), 2);
        assert!(
            matches!(&issues[0], RowIssue::UnknownLabel { label, line: 3 } if label == "dragon")
        );
        assert!(matches!(&issues[1], RowIssue::Malformed { line: 4, .. }));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(DatasetManifest::parse("id,path,label\na,p,ig\n", &tax()).is_err());
        assert!(DatasetManifest::parse("", &tax()).is_err());
    }

    #[test]
    fn labels_are_case_sensitive() {
        assert!(
            DatasetManifest::parse("sample_id,relative_path,label\na,p,Basophil\n", &tax())
                .is_err()
        );
    }

    #[test]
    fn digest_ignores_row_order_but_not_content() {
        let a = DatasetManifest::parse(
            "sample_id,relative_path,label\na,p,basophil\nb,q,ig\n",
            &tax(),
        )
        .unwrap();
        let b = DatasetManifest::parse(
            "sample_id,relative_path,label\r\nb,q,ig\r\na,p,basophil\r\n",
            &tax(),
        )
        .unwrap();
        let c = DatasetManifest::parse(
            "sample_id,relative_path,label\na,p,basophil\nb,q,platelet\n",
            &tax(),
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn csv_round_trip() {
        let text =
            "sample_id,relative_path,label\nz,\"dir,with comma/z.jpg\",monocyte\na,a.jpg,ig\n";
        let m = DatasetManifest::parse(text, &tax()).unwrap();
        assert_eq!(m.to_csv(), text);
        let back = DatasetManifest::parse(&m.to_csv(), &tax()).unwrap();
        assert_eq!(back, m);
    }
}
