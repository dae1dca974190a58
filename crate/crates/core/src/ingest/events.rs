use std::io::{BufRead, BufReader, Read, Write};

use log::warn;

use crate::error::{format_err, Error, Result};

/// One click in a raw session log.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawEvent {
    pub session_id: String,
    pub timestamp: i64,
    pub item_id: String,
}

impl RawEvent {
    pub fn new(session_id: impl Into<String>, timestamp: i64, item_id: impl Into<String>) -> Self {
        RawEvent {
            session_id: session_id.into(),
            timestamp,
            item_id: item_id.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedEvents {
    pub events: Vec<RawEvent>,
    /// Rows that were skipped because they did not parse.
    pub malformed: usize,
    /// 1-based line number of the first skipped row.
    pub first_bad_line: Option<usize>,
    pub header: bool,
}

/// More than this share of malformed rows fails the whole parse.
pub const MAX_MALFORMED_SHARE: f64 = 0.10;

fn parse_row(line: &str) -> Option<RawEvent> {
    let mut fields = line.split(',').map(str::trim);
    let (s, t, i) = (fields.next()?, fields.next()?, fields.next()?);
    if fields.next().is_some() || s.is_empty() || i.is_empty() {
        return None;
    }
    let ts: i64 = t.parse().ok()?;
    if ts < 0 {
        return None;
    }
    Some(RawEvent::new(s, ts, i))
}

fn looks_like_header(line: &str) -> bool {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 || fields[1].parse::<i64>().is_ok() {
        return false;
    }
    let ts = fields[1].to_ascii_lowercase();
    ts.contains("time") || ts == "ts"
}

/// Parses `session_id,timestamp,item_id` CSV.
///
/// A first row whose timestamp column is a non-numeric name such as
/// `timestamp` is taken as the header. Blank lines and `#` comment lines are
/// ignored. Up to 10% malformed rows are skipped and counted.
pub fn parse_events<R: Read>(input: R) -> Result<ParsedEvents> {
    let reader = BufReader::new(input);
    let mut out = ParsedEvents {
        events: Vec::new(),
        malformed: 0,
        first_bad_line: None,
        header: false,
    };
    let mut rows = 0usize;
    let mut seen_first = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_first {
            seen_first = true;
            if looks_like_header(trimmed) {
                out.header = true;
                continue;
            }
        }
        rows += 1;
        match parse_row(trimmed) {
            Some(ev) => out.events.push(ev),
            None => {
                out.malformed += 1;
                out.first_bad_line.get_or_insert(lineno + 1);
            }
        }
    }
    if rows > 0 && out.malformed as f64 > MAX_MALFORMED_SHARE * rows as f64 {
        let line = out.first_bad_line.unwrap_or(0);
        return Err(format_err(format!(
            "{} of {rows} rows are malformed; first bad row at line {line}",
            out.malformed
        )));
    }
    if out.malformed > 0 {
        warn!(
            "skipped {} malformed rows (first at line {})",
            out.malformed,
            out.first_bad_line.unwrap_or(0)
        );
    }
    Ok(out)
}

/// Writes events as CSV with a header row.
pub fn write_events<W: Write>(mut out: W, events: &[RawEvent]) -> Result<()> {
    writeln!(out, "session_id,timestamp,item_id")?;
    for ev in events {
        if ev.session_id.contains(',') || ev.item_id.contains(',') {
            return Err(Error::Data(format!("id contains a comma: {ev:?}")));
        }
        writeln!(out, "{},{},{}", ev.session_id, ev.timestamp, ev.item_id)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_in_order() {
        let p = parse_events("s1,100,a\ns1,105,b".as_bytes()).unwrap();
        assert_eq!(
            p.events,
            vec![RawEvent::new("s1", 100, "a"), RawEvent::new("s1", 105, "b")]
        );
        assert!(!p.header);
    }

    #[test]
    fn skips_header() {
        let p = parse_events("session_id,timestamp,item_id\ns9,1,x\n".as_bytes()).unwrap();
        assert!(p.header);
        assert_eq!(p.events.len(), 1);
    }

    #[test]
    fn lone_bad_row_is_a_format_error() {
        let err = parse_events("s1,notanumber,a".as_bytes()).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("line 1"), "{msg}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn tolerates_a_few_bad_rows() {
        let mut csv = String::new();
        for i in 0..20 {
            csv.push_str(&format!("s{i},{i},it{i}\n"));
        }
        csv.push_str("broken\n");
        csv.push_str("s,-4,x\n");
        let p = parse_events(csv.as_bytes()).unwrap();
        assert_eq!(p.events.len(), 20);
        assert_eq!(p.malformed, 2);
        assert_eq!(p.first_bad_line, Some(21));
    }

    #[test]
    fn comments_and_empty_input() {
        let p = parse_events("# generated\n\n".as_bytes()).unwrap();
        assert!(p.events.is_empty());
        let p = parse_events("".as_bytes()).unwrap();
        assert!(p.events.is_empty());
    }

    #[test]
    fn write_then_parse() {
        let evs = vec![RawEvent::new("a", 3, "x"), RawEvent::new("b", 9, "y")];
        let mut buf = Vec::new();
        write_events(&mut buf, &evs).unwrap();
        assert_eq!(parse_events(buf.as_slice()).unwrap().events, evs);
    }
}
