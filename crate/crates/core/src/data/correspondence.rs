use std::collections::HashSet;

use super::EmbeddingStore;
use crate::error::{Error, Result};

/// Many-to-many ground-truth matches between image and caption IDs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceMap {
    edges: Vec<(String, String)>,
}

impl CorrespondenceMap {
    /// Validates referential integrity and uniqueness.
    pub fn new(
        edges: Vec<(String, String)>,
        images: &EmbeddingStore,
        captions: &EmbeddingStore,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, (img, cap)) in edges.iter().enumerate() {
            check_edge(img, cap, images, captions, &mut seen, None)
                .map_err(|e| match e {
                    Error::Validation { msg, .. } => Error::validation(None, format!("edge {i}: {msg}")),
                    other => other,
                })?;
        }
        Ok(Self { edges })
    }

    /// Parses `image_id<TAB>caption_id` lines; blank lines and lines starting
    /// with `#` are skipped. Errors carry 1-based line numbers.
    pub fn parse(text: &str, images: &EmbeddingStore, captions: &EmbeddingStore) -> Result<Self> {
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let lineno = Some(n + 1);
            let mut fields = line.split('\t');
            let (Some(img), Some(cap), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::validation(lineno, "expected image_id<TAB>caption_id"));
            };
            check_edge(img, cap, images, captions, &mut seen, lineno)?;
            edges.push((img.to_owned(), cap.to_owned()));
        }
        Ok(Self { edges })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# image_id\tcaption_id\n");
        for (i, c) in &self.edges {
            s.push_str(i);
            s.push('\t');
            s.push_str(c);
            s.push('\n');
        }
        s
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Row-index pairs `(image_row, caption_row)` in edge order.
    pub fn index_pairs(
        &self,
        images: &EmbeddingStore,
        captions: &EmbeddingStore,
    ) -> Result<Vec<(usize, usize)>> {
        self.edges
            .iter()
            .map(|(i, c)| match (images.index_of(i), captions.index_of(c)) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(Error::validation(None, format!("edge ({i}, {c}) not in stores"))),
            })
            .collect()
    }
}

fn check_edge<'a>(
    img: &'a str,
    cap: &'a str,
    images: &EmbeddingStore,
    captions: &EmbeddingStore,
    seen: &mut HashSet<(&'a str, &'a str)>,
    line: Option<usize>,
) -> Result<()> {
    if images.index_of(img).is_none() {
        return Err(Error::validation(line, format!("unknown image id {img:?}")));
    }
    if captions.index_of(cap).is_none() {
        return Err(Error::validation(line, format!("unknown caption id {cap:?}")));
    }
    if !seen.insert((img, cap)) {
        return Err(Error::validation(line, format!("duplicate edge ({img}, {cap})")));
    }
    Ok(())
}
