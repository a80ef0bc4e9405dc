use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{SensorReading, SensorStream};
use crate::time::Timestamp;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("duplicate source id {0:?}")]
    DuplicateSource(String),
    #[error("unknown source id {0:?}")]
    UnknownSource(String),
}

/// Position of one reading: stream ordinal and offset within the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadingPos {
    pub stream: usize,
    pub position: usize,
}

/// Immutable lookup structure over a set of streams.
///
/// Time ranges are closed on both ends. Subject postings are kept sorted by
/// `(stream, position)` so a per-stream, per-subject time window is two
/// binary searches.
#[derive(Debug, Clone, Default)]
pub struct StreamIndex {
    streams: Vec<SensorStream>,
    by_source: BTreeMap<String, usize>,
    by_subject: HashMap<String, Vec<ReadingPos>>,
}

pub fn build_index(streams: Vec<SensorStream>) -> Result<StreamIndex, IndexError> {
    let mut by_source = BTreeMap::new();
    let mut by_subject: HashMap<String, Vec<ReadingPos>> = HashMap::new();
    let mut sorted = Vec::with_capacity(streams.len());
    for (ordinal, mut stream) in streams.into_iter().enumerate() {
        if by_source.insert(stream.source_id.clone(), ordinal).is_some() {
            return Err(IndexError::DuplicateSource(stream.source_id));
        }
        if !stream.is_sorted() {
            stream.readings.sort_by(SensorReading::stream_order);
        }
        for (position, reading) in stream.readings.iter().enumerate() {
            if let Some(subject) = &reading.subject_key {
                by_subject.entry(subject.clone()).or_default().push(ReadingPos {
                    stream: ordinal,
                    position,
                });
            }
        }
        sorted.push(stream);
    }
    Ok(StreamIndex {
        streams: sorted,
        by_source,
        by_subject,
    })
}

impl StreamIndex {
    pub fn source_ids(&self) -> impl Iterator<Item = &str> {
        self.by_source.keys().map(String::as_str)
    }

    pub fn stream(&self, source_id: &str) -> Option<&SensorStream> {
        self.by_source.get(source_id).map(|&i| &self.streams[i])
    }

    pub fn reading(&self, pos: ReadingPos) -> &SensorReading {
        &self.streams[pos.stream].readings[pos.position]
    }

    fn ordinal(&self, source_id: &str) -> Result<usize, IndexError> {
        self.by_source
            .get(source_id)
            .copied()
            .ok_or_else(|| IndexError::UnknownSource(source_id.to_owned()))
    }

    /// Offsets `[lo, hi)` of the readings with `t1 <= timestamp <= t2`.
    fn bounds(stream: &SensorStream, t1: Timestamp, t2: Timestamp) -> (usize, usize) {
        let lo = stream.readings.partition_point(|r| r.timestamp < t1);
        let hi = stream.readings.partition_point(|r| r.timestamp <= t2);
        (lo, hi.max(lo))
    }

    /// All readings of `source_id` with `t1 <= timestamp <= t2`, in stream order.
    pub fn range_query(&self, source_id: &str, t1: Timestamp, t2: Timestamp) -> Result<&[SensorReading], IndexError> {
        let stream = &self.streams[self.ordinal(source_id)?];
        let (lo, hi) = Self::bounds(stream, t1, t2);
        Ok(&stream.readings[lo..hi])
    }

    /// Every reading carrying `subject_key`, across all streams.
    pub fn subject_readings(&self, subject_key: &str) -> Vec<&SensorReading> {
        self.by_subject
            .get(subject_key)
            .map(|positions| positions.iter().map(|&p| self.reading(p)).collect())
            .unwrap_or_default()
    }

    /// Readings of one stream carrying `subject_key` inside `[t1, t2]`, in
    /// stream order.
    pub fn subject_range(
        &self,
        source_id: &str,
        subject_key: &str,
        t1: Timestamp,
        t2: Timestamp,
    ) -> Result<Vec<&SensorReading>, IndexError> {
        let ordinal = self.ordinal(source_id)?;
        let Some(postings) = self.by_subject.get(subject_key) else {
            return Ok(Vec::new());
        };
        let (lo, hi) = Self::bounds(&self.streams[ordinal], t1, t2);
        let start = postings.partition_point(|p| (p.stream, p.position) < (ordinal, lo));
        let end = postings.partition_point(|p| (p.stream, p.position) < (ordinal, hi));
        Ok(postings[start..end].iter().map(|&p| self.reading(p)).collect())
    }
}
