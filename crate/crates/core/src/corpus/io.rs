//! Corpus file formats.
//!
//! XML uses the minimal element form
//! `<reports><report id=""><text/><code/></report></reports>`; JSONL is one
//! object per line with fields `id`, `text` and optional `code`. Text is
//! returned verbatim — cleaning belongs to `textprep`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};
use serde::{Deserialize, Serialize};

use super::Report;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Xml,
    Jsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xml" => Ok(CorpusFormat::Xml),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    code: Option<String>,
}

/// Load a corpus file. Reports come back in file order; ids must be unique.
pub fn load_reports(path: &Path, format: CorpusFormat) -> Result<Vec<Report>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reports = match format {
        CorpusFormat::Jsonl => parse_jsonl(&content)?,
        CorpusFormat::Xml => parse_xml(&content)?,
    };
    let mut seen = HashSet::new();
    for r in &reports {
        r.validate()?;
        if !seen.insert(r.id.clone()) {
            return Err(Error::invalid(format!("duplicate report id `{}`", r.id)));
        }
    }
    Ok(reports)
}

fn parse_jsonl(content: &str) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| Error::invalid(format!("jsonl line {}: {e}", i + 1)))?;
        out.push(Report {
            id: rec.id,
            text: rec.text,
            label: rec.code,
        });
    }
    Ok(out)
}

#[derive(PartialEq)]
enum TextTarget {
    None,
    Text,
    Code,
}

fn parse_xml(content: &str) -> Result<Vec<Report>> {
    let mut reader = Reader::from_str(content);
    let mut out: Vec<Report> = Vec::new();
    let mut current: Option<Report> = None;
    let mut target = TextTarget::None;
    let mut record = 0usize;

    let bad = |record: usize, what: &str| {
        Error::invalid(format!("xml record {record}: {what}"))
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::invalid(format!("xml record {record}: {e}")))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                match e.name().as_ref() {
                    b"reports" => {}
                    b"report" => {
                        record += 1;
                        let id = e
                            .try_get_attribute("id")
                            .map_err(|er| bad(record, &er.to_string()))?
                            .ok_or_else(|| bad(record, "missing id attribute"))?
                            .unescape_value()
                            .map_err(|er| bad(record, &er.to_string()))?
                            .into_owned();
                        let report = Report {
                            id,
                            text: String::new(),
                            label: None,
                        };
                        if is_empty {
                            out.push(report);
                        } else {
                            current = Some(report);
                        }
                    }
                    b"text" => {
                        if current.is_none() {
                            return Err(bad(record, "<text> outside <report>"));
                        }
                        if !is_empty {
                            target = TextTarget::Text;
                        }
                    }
                    b"code" => {
                        let Some(r) = current.as_mut() else {
                            return Err(bad(record, "<code> outside <report>"));
                        };
                        r.label = Some(String::new());
                        if !is_empty {
                            target = TextTarget::Code;
                        }
                    }
                    other => {
                        return Err(bad(
                            record,
                            &format!("unexpected element <{}>", String::from_utf8_lossy(other)),
                        ))
                    }
                }
            }
            Event::Text(t) => {
                let value = t
                    .unescape()
                    .map_err(|er| bad(record, &er.to_string()))?;
                match target {
                    TextTarget::Text => {
                        if let Some(r) = current.as_mut() {
                            r.text.push_str(&value);
                        }
                    }
                    TextTarget::Code => {
                        if let Some(r) = current.as_mut() {
                            if let Some(code) = r.label.as_mut() {
                                code.push_str(&value);
                            }
                        }
                    }
                    TextTarget::None => {} // whitespace between elements
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"text" | b"code" => target = TextTarget::None,
                b"report" => {
                    let r = current
                        .take()
                        .ok_or_else(|| bad(record, "unmatched </report>"))?;
                    out.push(r);
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(bad(record, "unclosed <report>"));
    }
    Ok(out)
}

/// Write a corpus as JSONL, one record per line, in report order.
pub fn write_jsonl(reports: &[Report], path: &Path) -> Result<()> {
    let mut s = String::new();
    for r in reports {
        let rec = JsonlRecord {
            id: r.id.clone(),
            text: r.text.clone(),
            code: r.label.clone(),
        };
        s.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write a corpus in the minimal XML element form.
pub fn write_xml(reports: &[Report], path: &Path) -> Result<()> {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    let io_err = |e: quick_xml::Error| Error::io(path.display().to_string(), e);
    writer
        .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(io_err)?;
    writer
        .write_event(Event::Start(BytesStart::new("reports")))
        .map_err(io_err)?;
    for r in reports {
        let mut start = BytesStart::new("report");
        start.push_attribute(("id", r.id.as_str()));
        writer.write_event(Event::Start(start)).map_err(io_err)?;
        writer
            .write_event(Event::Start(BytesStart::new("text")))
            .map_err(io_err)?;
        writer
            .write_event(Event::Text(BytesText::new(&r.text)))
            .map_err(io_err)?;
        writer
            .write_event(Event::End(BytesEnd::new("text")))
            .map_err(io_err)?;
        if let Some(code) = &r.label {
            writer
                .write_event(Event::Start(BytesStart::new("code")))
                .map_err(io_err)?;
            writer
                .write_event(Event::Text(BytesText::new(code)))
                .map_err(io_err)?;
            writer
                .write_event(Event::End(BytesEnd::new("code")))
                .map_err(io_err)?;
        }
        writer
            .write_event(Event::End(BytesEnd::new("report")))
            .map_err(io_err)?;
    }
    writer
        .write_event(Event::End(BytesEnd::new("reports")))
        .map_err(io_err)?;
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}
