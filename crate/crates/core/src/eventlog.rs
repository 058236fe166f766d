//! JSON-lines event logs: one header line describing the run, then one
//! [`EventRecord`] per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::measurement::EventRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Quantum,
    Classical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub kind: HeaderKind,
    pub source: EventSource,
    pub config: ProtocolConfig,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderKind {
    Header,
}

impl LogHeader {
    pub fn new(source: EventSource, config: ProtocolConfig) -> Self {
        let seed = config.seed;
        LogHeader {
            kind: HeaderKind::Header,
            source,
            config,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<EventRecord>,
}

pub fn write_log<W: Write>(mut out: W, header: &LogHeader, events: &[EventRecord]) -> Result<()> {
    let line = |e: serde_json::Error| Error::Io(e.into());
    serde_json::to_writer(&mut out, header).map_err(line)?;
    out.write_all(b"\n")?;
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a log. Blank lines are skipped; parse errors carry the 1-based
/// line number.
pub fn read_log<R: BufRead>(input: R) -> Result<EventLog> {
    let mut header = None;
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |e: serde_json::Error| Error::Parse {
            line: number,
            message: e.to_string(),
        };
        if header.is_none() {
            header = Some(serde_json::from_str::<LogHeader>(&line).map_err(parse)?);
        } else {
            events.push(serde_json::from_str::<EventRecord>(&line).map_err(parse)?);
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        message: "empty event log".into(),
    })?;
    header.config.validate()?;
    Ok(EventLog { header, events })
}

/// Concatenates logs. All logs must share one configuration; the first
/// header is kept.
pub fn merge_logs(logs: Vec<EventLog>) -> Result<EventLog> {
    let mut iter = logs.into_iter();
    let mut merged = iter.next().ok_or(Error::Parse {
        line: 0,
        message: "no event logs".into(),
    })?;
    for log in iter {
        let mut a = log.header.config.clone();
        let mut b = merged.header.config.clone();
        a.seed = 0;
        b.seed = 0;
        if a != b || log.header.source != merged.header.source {
            return Err(Error::ProtocolInvalid(
                "event logs describe different experiments".into(),
            ));
        }
        merged.events.extend(log.events);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::simulate_events;

    #[test]
    fn round_trip() {
        let config = ProtocolConfig {
            shots_per_arm: 20,
            seed: 3,
            ..ProtocolConfig::default()
        };
        let events = simulate_events(&config).unwrap();
        let header = LogHeader::new(EventSource::Quantum, config);
        let mut buf = Vec::new();
        write_log(&mut buf, &header, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"kind":"header","source":"quantum""#));
        let log = read_log(buf.as_slice()).unwrap();
        assert_eq!(log.header, header);
        assert_eq!(log.events, events);
    }

    #[test]
    fn parse_error_has_line_number() {
        let header = serde_json::to_string(&LogHeader::new(
            EventSource::Quantum,
            ProtocolConfig::default(),
        ))
        .unwrap();
        let text = format!("{header}\n\n{{\"run_id\": 1}}\n");
        match read_log(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_log("".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn merge_rejects_mismatched_configs() {
        let a = EventLog {
            header: LogHeader::new(EventSource::Quantum, ProtocolConfig::default()),
            events: vec![],
        };
        let mut b = a.clone();
        b.header.config.theta = 1.0;
        assert!(merge_logs(vec![a.clone(), b]).is_err());
        let mut c = a.clone();
        c.header.config.seed = 9;
        assert!(merge_logs(vec![a, c]).is_ok());
    }
}
