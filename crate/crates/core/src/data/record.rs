use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hero,
    Villain,
    Victim,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Hero, Role::Villain, Role::Victim];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Role> {
        Role::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Hero => "hero",
            Role::Villain => "villain",
            Role::Victim => "victim",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hero" => Ok(Role::Hero),
            "villain" => Ok(Role::Villain),
            "victim" => Ok(Role::Victim),
            other => Err(format!("unknown role `{other}` (expected hero, villain or victim)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    UsPolitics,
    Covid19,
    Unspecified,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::UsPolitics, Domain::Covid19, Domain::Unspecified];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::UsPolitics => "us_politics",
            Domain::Covid19 => "covid19",
            Domain::Unspecified => "unspecified",
        }
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "us_politics" => Ok(Domain::UsPolitics),
            "covid19" => Ok(Domain::Covid19),
            "unspecified" | "" => Ok(Domain::Unspecified),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// Where a sample's pixels come from. File images are decoded on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    File(PathBuf),
    Inline(Image),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemeSample {
    pub id: String,
    pub image: Option<ImageSource>,
    pub ocr_text: String,
    pub caption: String,
    pub entity: String,
    pub role: Role,
    pub explanations: Vec<String>,
    pub split: Split,
    pub domain: Domain,
}

impl MemeSample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.ocr_text.trim().is_empty() {
            return Err("ocr_text is empty".into());
        }
        if self.entity.trim().is_empty() {
            return Err("entity is empty".into());
        }
        if self.explanations.is_empty() {
            return Err("no explanations".into());
        }
        if self.explanations.iter().any(|e| e.trim().is_empty()) {
            return Err("empty explanation".into());
        }
        Ok(())
    }

    /// Training target: the first annotator's explanation.
    pub fn primary_explanation(&self) -> &str {
        &self.explanations[0]
    }

    /// Materializes the pixel grid at the requested size.
    pub fn load_image(&self, height: usize, width: usize) -> Result<Option<Image>> {
        match &self.image {
            None => Ok(None),
            Some(ImageSource::Inline(img)) => Ok(Some(img.clone())),
            Some(ImageSource::File(path)) => Image::load(path, height, width).map(Some),
        }
    }
}

/// On-disk line layout. Enumerations stay strings here so unknown values can be reported with
/// their line number.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    #[serde(default)]
    pub image_path: Option<String>,
    pub ocr_text: String,
    #[serde(default)]
    pub caption: String,
    pub entity: String,
    pub role: String,
    pub explanations: Vec<String>,
    pub split: String,
    #[serde(default)]
    pub domain: String,
}

impl RawRecord {
    fn into_sample(self, base: &Path) -> std::result::Result<MemeSample, String> {
        let sample = MemeSample {
            role: self.role.parse()?,
            split: self.split.parse()?,
            domain: self.domain.parse()?,
            image: self
                .image_path
                .filter(|p| !p.is_empty())
                .map(|p| ImageSource::File(base.join(p))),
            id: self.id,
            ocr_text: self.ocr_text,
            caption: self.caption,
            entity: self.entity,
            explanations: self.explanations,
        };
        sample.validate()?;
        Ok(sample)
    }
}

/// Reads a line-delimited JSON dataset. Blank lines are skipped; image paths resolve relative to
/// the file's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<MemeSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        out.push(raw.into_sample(&base).map_err(record_err)?);
    }
    Ok(out)
}

/// Writes samples in the dataset line format. Inline images are stored as PNG files under
/// `images/` next to the dataset file.
pub fn write_dataset(path: &Path, samples: &[MemeSample]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut buf = Vec::new();
    for s in samples {
        let image_path = match &s.image {
            None => None,
            Some(ImageSource::File(p)) => Some(
                p.strip_prefix(&base)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
            ),
            Some(ImageSource::Inline(img)) => {
                let rel = format!("images/{}.png", s.id);
                let full = base.join(&rel);
                if let Some(dir) = full.parent() {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                img.save_png(&full)?;
                Some(rel)
            }
        };
        let raw = RawRecord {
            id: s.id.clone(),
            image_path,
            ocr_text: s.ocr_text.clone(),
            caption: s.caption.clone(),
            entity: s.entity.clone(),
            role: s.role.as_str().into(),
            explanations: s.explanations.clone(),
            split: s.split.as_str().into(),
            domain: s.domain.as_str().into(),
        };
        serde_json::to_writer(&mut buf, &raw).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(role: &str) -> String {
        format!(
            r#"{{"id":"m1","image_path":null,"ocr_text":"text","caption":"cap","entity":"ent","role":"{role}","explanations":["e1"],"split":"train","domain":"covid19"}}"#
        )
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_dataset(&p).unwrap().is_empty());
    }

    #[test]
    fn three_lines_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let body = [line("hero"), line("villain"), line("victim")].join("\n");
        fs::write(&p, body).unwrap();
        let got = load_dataset(&p).unwrap();
        let roles: Vec<Role> = got.iter().map(|s| s.role).collect();
        assert_eq!(roles, vec![Role::Hero, Role::Villain, Role::Victim]);
    }

    #[test]
    fn other_role_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, [line("hero"), line("other")].join("\n")).unwrap();
        let err = load_dataset(&p).unwrap_err();
        match &err {
            Error::Record { line, message, .. } => {
                assert_eq!(*line, 2);
                assert!(message.contains("other"));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn malformed_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "{not json").unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Record { line: 1, .. })));
        assert!(matches!(
            load_dataset(&dir.path().join("nope.jsonl")),
            Err(Error::Io { .. })
        ));
        let bad_split = line("hero").replace("\"train\"", "\"dev\"");
        fs::write(&p, bad_split).unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Record { line: 1, .. })));
    }

    #[test]
    fn empty_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, line("hero").replace("\"text\"", "\"\"")).unwrap();
        assert!(load_dataset(&p).is_err());
        fs::write(&p, line("hero").replace("[\"e1\"]", "[]")).unwrap();
        assert!(load_dataset(&p).is_err());
    }
}
