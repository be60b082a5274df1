//! Line-delimited JSON stream files.
//!
//! Detection streams start with `{"dimension":<d>,"version":1}` followed by
//! one frame per line:
//!
//! ```text
//! {"frame":0,"detections":[{"det":"0:0","bbox":[x,y,w,h],"desc":[...],"gt":"id3"}]}
//! ```
//!
//! `bbox` and `gt` are optional. Results files start with
//! `{"kind":"memtrack-results","version":1}` followed by one
//! [`FrameResult`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::FrameResult;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matcher::Observation;

pub const FORMAT_VERSION: u32 = 1;
const RESULTS_KIND: &str = "memtrack-results";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub dimension: usize,
    pub version: u32,
}

impl StreamHeader {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            version: FORMAT_VERSION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub det: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    pub desc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame: u64,
    pub detections: Vec<DetectionRecord>,
}

impl FrameRecord {
    pub fn observations(&self) -> Vec<Observation> {
        self.detections
            .iter()
            .map(|d| Observation {
                det: d.det.clone(),
                descriptor: d.desc.clone(),
                bbox: d.bbox,
                gt: d.gt.clone(),
            })
            .collect()
    }
}

/// Lazy reader over a detection stream. Yields frames in file order and
/// validates each one as it is read.
pub struct StreamReader<R> {
    header: StreamHeader,
    lines: Lines<R>,
    line: usize,
    last_frame: Option<u64>,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing stream header"))??;
        let header: StreamHeader = serde_json::from_str(&first)
            .map_err(|e| Error::parse(1, format!("bad stream header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported stream version {}",
                header.version
            )));
        }
        if header.dimension == 0 {
            return Err(Error::Schema("stream dimension must be positive".into()));
        }
        Ok(Self {
            header,
            lines,
            line: 1,
            last_frame: None,
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    fn parse_next(&mut self, text: &str) -> Result<FrameRecord> {
        let record: FrameRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(self.line, e.to_string()))?;
        if let Some(last) = self.last_frame {
            if record.frame <= last {
                return Err(Error::parse(
                    self.line,
                    format!("frame {} does not follow frame {last}", record.frame),
                ));
            }
        }
        for d in &record.detections {
            if d.desc.len() != self.header.dimension {
                return Err(Error::Schema(format!(
                    "line {}: detection `{}` has {} components, header declares {}",
                    self.line,
                    d.det,
                    d.desc.len(),
                    self.header.dimension
                )));
            }
        }
        self.last_frame = Some(record.frame);
        Ok(record)
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse_next(&text));
        }
    }
}

pub fn open_stream(path: &Path) -> Result<StreamReader<BufReader<File>>> {
    StreamReader::new(BufReader::new(File::open(path)?))
}

/// Reads a whole stream into memory.
pub fn read_stream(path: &Path) -> Result<(StreamHeader, Vec<FrameRecord>)> {
    let reader = open_stream(path)?;
    let header = reader.header();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

pub fn write_stream_to<W: Write>(
    mut out: W,
    header: &StreamHeader,
    frames: &[FrameRecord],
) -> Result<()> {
    serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for f in frames {
        serde_json::to_writer(&mut out, f).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stream(path: &Path, header: &StreamHeader, frames: &[FrameRecord]) -> Result<()> {
    write_stream_to(BufWriter::new(File::create(path)?), header, frames)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultsHeader {
    kind: String,
    version: u32,
}

/// Incremental results writer: header on creation, one line per frame.
pub struct ResultsWriter<W: Write> {
    out: W,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        let header = ResultsHeader {
            kind: RESULTS_KIND.into(),
            version: FORMAT_VERSION,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, result: &FrameResult) -> Result<()> {
        serde_json::to_writer(&mut self.out, result).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_results(path: &Path, results: &[FrameResult]) -> Result<()> {
    let mut w = ResultsWriter::new(BufWriter::new(File::create(path)?))?;
    for r in results {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_results_from<R: BufRead>(input: R) -> Result<Vec<FrameResult>> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing results header"))??;
    let header: ResultsHeader = serde_json::from_str(&first)
        .map_err(|e| Error::parse(1, format!("bad results header: {e}")))?;
    if header.kind != RESULTS_KIND || header.version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "expected {RESULTS_KIND} v{FORMAT_VERSION}, found {} v{}",
            header.kind, header.version
        )));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FrameResult =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 2, e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_results(path: &Path) -> Result<Vec<FrameResult>> {
    read_results_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Assignment, TrackStatus};
    use crate::memory::{IdentityId, ItemKey};

    fn fixture() -> (StreamHeader, Vec<FrameRecord>) {
        let header = StreamHeader::new(2);
        let frames = vec![
            FrameRecord {
                frame: 0,
                detections: vec![
                    DetectionRecord {
                        det: "0:0".into(),
                        bbox: Some(BBox::new(1.0, 2.0, 3.0, 4.0).unwrap()),
                        desc: vec![0.123_456_789_012_345_6, -1e-9],
                        gt: Some("alice".into()),
                    },
                    DetectionRecord {
                        det: "0:1".into(),
                        bbox: None,
                        desc: vec![1.0, 0.0],
                        gt: None,
                    },
                ],
            },
            FrameRecord {
                frame: 2,
                detections: vec![],
            },
        ];
        (header, frames)
    }

    #[test]
    fn stream_round_trip() {
        let (header, frames) = fixture();
        let mut buf = Vec::new();
        write_stream_to(&mut buf, &header, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"dimension\":2,\"version\":1}\n"));
        assert!(text.contains("\"det\":\"0:0\",\"bbox\":[1.0,2.0,3.0,4.0],\"desc\":[0.1234567890123456,"));
        let reader = StreamReader::new(buf.as_slice()).unwrap();
        assert_eq!(reader.header(), header);
        let back: Vec<FrameRecord> = reader.collect::<Result<_>>().unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn header_only_stream_is_empty() {
        let reader = StreamReader::new("{\"dimension\":3,\"version\":1}\n".as_bytes()).unwrap();
        assert_eq!(reader.count(), 0);
    }

    #[test]
    fn out_of_order_frames_report_the_line() {
        let text = "{\"dimension\":1,\"version\":1}\n\
                    {\"frame\":3,\"detections\":[]}\n\
                    {\"frame\":3,\"detections\":[]}\n";
        let err = StreamReader::new(text.as_bytes())
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_records_are_rejected() {
        let wrong_dim = "{\"dimension\":2,\"version\":1}\n\
                         {\"frame\":0,\"detections\":[{\"det\":\"a\",\"desc\":[1.0]}]}\n";
        let err = StreamReader::new(wrong_dim.as_bytes())
            .unwrap()
            .next()
            .unwrap()
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));

        let junk = "{\"dimension\":2,\"version\":1}\nnot json\n";
        let err = StreamReader::new(junk.as_bytes()).unwrap().next().unwrap().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let bad_box = "{\"dimension\":1,\"version\":1}\n\
                       {\"frame\":0,\"detections\":[{\"det\":\"a\",\"bbox\":[0,0,0,1],\"desc\":[1.0]}]}\n";
        let err = StreamReader::new(bad_box.as_bytes()).unwrap().next().unwrap().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        assert!(StreamReader::new("{\"dimension\":2,\"version\":9}\n".as_bytes()).is_err());
        assert!(StreamReader::new("".as_bytes()).is_err());
    }

    fn result(frame: u64) -> FrameResult {
        FrameResult {
            frame,
            assignments: vec![
                Assignment {
                    obs: 0,
                    det: format!("{frame}:0"),
                    bbox: Some(BBox::new(0.0, 0.0, 2.0, 2.0).unwrap()),
                    id: Some(IdentityId(3)),
                    status: Some(TrackStatus::Tentative),
                    support: 4,
                    mean_d1: Some(0.137_000_000_1),
                },
                Assignment {
                    obs: 1,
                    det: format!("{frame}:1"),
                    bbox: None,
                    id: None,
                    status: None,
                    support: 0,
                    mean_d1: None,
                },
            ],
            new_ids: vec![IdentityId(7)],
            removed: vec![ItemKey(2), ItemKey(9)],
            memory_size: 12,
            max_eta: Some(0.995_310_991_594_197),
            ..FrameResult::default()
        }
    }

    #[test]
    fn results_round_trip() {
        for results in [vec![], vec![result(0)], vec![result(0), result(1), result(5)]] {
            let mut w = ResultsWriter::new(Vec::new()).unwrap();
            for r in &results {
                w.write(r).unwrap();
            }
            let buf = w.finish().unwrap();
            let text = std::str::from_utf8(&buf).unwrap();
            assert_eq!(text.lines().count(), results.len() + 1);
            assert_eq!(read_results_from(buf.as_slice()).unwrap(), results);
        }
    }
}
