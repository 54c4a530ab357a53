//! Decay CSV format.
//!
//! ```text
//! # ipvae-decays v1; d=20; delay_ms=120; window_ms=40
//! id,vp_mv,current_ma,label,m1,...,m20
//! s0001,633.2,890,100,12.5,...,3.1
//! ```
//!
//! Absent optionals are empty fields. Unknown columns are skipped with a
//! warning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DataError, IpDecay, WindowScheme};

const MAGIC: &str = "ipvae-decays";
const VERSION: &str = "v1";

pub fn header_line(scheme: &WindowScheme) -> String {
    format!(
        "# {MAGIC} {VERSION}; d={}; delay_ms={}; window_ms={}",
        scheme.count, scheme.delay_ms, scheme.window_ms
    )
}

fn parse_header(line: &str) -> Result<WindowScheme, DataError> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| DataError::Header("first line must start with `#`".into()))?;
    let mut parts = body.split(';').map(str::trim);
    let tag = parts.next().unwrap_or_default();
    if tag != format!("{MAGIC} {VERSION}") {
        return Err(DataError::Header(format!(
            "expected `{MAGIC} {VERSION}`, found `{tag}`"
        )));
    }
    let (mut d, mut delay, mut window) = (None, None, None);
    for part in parts.filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| DataError::Header(format!("malformed entry `{part}`")))?;
        let bad = |_| DataError::Header(format!("bad value for `{key}`: `{value}`"));
        match key.trim() {
            "d" => d = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "delay_ms" => delay = Some(value.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "window_ms" => window = Some(value.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
            other => log::warn!("ignoring unknown header entry `{other}`"),
        }
    }
    let missing = |k: &str| DataError::Header(format!("missing `{k}`"));
    WindowScheme::new(
        delay.ok_or_else(|| missing("delay_ms"))?,
        window.ok_or_else(|| missing("window_ms"))?,
        d.ok_or_else(|| missing("d"))?,
    )
}

pub fn read_decays(path: impl AsRef<Path>) -> Result<Vec<IpDecay>, DataError> {
    read_decays_from(File::open(path)?)
}

pub fn read_decays_from(reader: impl Read) -> Result<Vec<IpDecay>, DataError> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let scheme = parse_header(first.trim_end())?;
    let d = scheme.count;

    let mut rows = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rows.headers()?.clone();

    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = find("id").ok_or_else(|| DataError::Row {
        line: 2,
        message: "missing `id` column".into(),
    })?;
    let vp_col = find("vp_mv");
    let current_col = find("current_ma");
    let label_col = find("label");
    let mut window_cols = Vec::with_capacity(d);
    for j in 1..=d {
        window_cols.push(find(&format!("m{j}")).ok_or_else(|| DataError::Row {
            line: 2,
            message: format!("missing window column m{j} (header declares d={d})"),
        })?);
    }
    let known: Vec<usize> = [Some(id_col), vp_col, current_col, label_col]
        .into_iter()
        .flatten()
        .chain(window_cols.iter().copied())
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if !known.contains(&i) {
            log::warn!("ignoring unknown column `{h}`");
        }
    }

    let mut decays = Vec::new();
    for record in rows.records() {
        let record = record?;
        // one line for the `#` header
        let line = record.position().map_or(0, |p| p.line()) + 1;
        if record.len() != headers.len() {
            return Err(DataError::Row {
                line,
                message: format!(
                    "expected {} fields ({} metadata + d={d} windows), found {}",
                    headers.len(),
                    headers.len() - d,
                    record.len()
                ),
            });
        }
        let field = |col: usize| record.get(col).unwrap_or("").trim();
        let number = |col: usize| -> Result<Option<f64>, DataError> {
            let text = field(col);
            if text.is_empty() {
                return Ok(None);
            }
            text.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
                line,
                column: headers[col].to_string(),
                message: format!("`{text}` is not a number"),
            })
        };
        let optional = |col: Option<usize>| col.map_or(Ok(None), number);

        let mut windows = Vec::with_capacity(d);
        for &col in &window_cols {
            let value = number(col)?.ok_or_else(|| DataError::Parse {
                line,
                column: headers[col].to_string(),
                message: "window value is empty".into(),
            })?;
            if !value.is_finite() {
                return Err(DataError::Parse {
                    line,
                    column: headers[col].to_string(),
                    message: format!("non-finite window value `{}`", field(col)),
                });
            }
            windows.push(value);
        }
        let vp_mv = optional(vp_col)?;
        if let Some(vp) = vp_mv {
            if vp <= 0.0 {
                return Err(DataError::Parse {
                    line,
                    column: "vp_mv".into(),
                    message: format!("primary voltage must be > 0, got {vp}"),
                });
            }
        }
        let label = optional(label_col)?;
        if let Some(l) = label {
            if !(0.0..=100.0).contains(&l) {
                return Err(DataError::Parse {
                    line,
                    column: "label".into(),
                    message: format!("confidence score must lie in [0, 100], got {l}"),
                });
            }
        }
        decays.push(IpDecay {
            id: field(id_col).to_string(),
            windows,
            vp_mv,
            current_ma: optional(current_col)?,
            label,
            scheme,
        });
    }
    Ok(decays)
}

pub fn write_decays(decays: &[IpDecay], path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_decays_to(decays, &mut out)?;
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_decays_to(decays: &[IpDecay], out: &mut impl Write) -> Result<(), DataError> {
    let scheme = decays.first().map(|d| d.scheme).unwrap_or_default();
    if decays.iter().any(|d| d.scheme != scheme) {
        return Err(DataError::MixedSchemes);
    }
    for d in decays {
        d.validate()?;
    }
    writeln!(out, "{}", header_line(&scheme))?;
    let mut columns = vec!["id".to_string(), "vp_mv".into(), "current_ma".into(), "label".into()];
    columns.extend((1..=scheme.count).map(|j| format!("m{j}")));
    writeln!(out, "{}", columns.join(","))?;
    for d in decays {
        write!(
            out,
            "{},{},{},{}",
            d.id,
            opt(d.vp_mv),
            opt(d.current_ma),
            opt(d.label)
        )?;
        for v in &d.windows {
            // shortest round-trip representation
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_ground_truth, SyntheticSpec};

    fn sample_file(rows: &[&str]) -> String {
        let mut s = String::from("# ipvae-decays v1; d=3; delay_ms=120; window_ms=40\n");
        s.push_str("id,vp_mv,current_ma,label,m1,m2,m3\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let mut decays = generate_ground_truth(&SyntheticSpec {
            n: 100,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        decays[0].vp_mv = Some(633.0);
        decays[0].current_ma = Some(890.5);
        decays[0].label = Some(87.0);
        let mut buf = Vec::new();
        write_decays_to(&decays, &mut buf).unwrap();
        let back = read_decays_from(buf.as_slice()).unwrap();
        assert_eq!(back, decays);
    }

    #[test]
    fn optionals_may_be_empty() {
        let text = sample_file(&["a,,,,1,2,3", "b,10,5,50,-1,0.5,2e-3"]);
        let decays = read_decays_from(text.as_bytes()).unwrap();
        assert_eq!(decays.len(), 2);
        assert_eq!(decays[0].vp_mv, None);
        assert_eq!(decays[1].label, Some(50.0));
        assert_eq!(decays[1].windows, vec![-1.0, 0.5, 2e-3]);
        assert_eq!(decays[1].scheme.count, 3);
    }

    #[test]
    fn short_row_names_its_line() {
        let text = sample_file(&["a,,,,1,2,3", "b,,,,1,2"]);
        let err = read_decays_from(text.as_bytes()).unwrap_err();
        match err {
            DataError::Row { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("d=3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nineteen_of_twenty_windows_rejected() {
        let decays = generate_ground_truth(&SyntheticSpec { n: 1, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_decays_to(&decays, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated = text.trim_end().rsplit_once(',').unwrap().0.to_string() + "\n";
        let err = read_decays_from(truncated.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("d=20"), "{err}");
    }

    #[test]
    fn malformed_value_names_line_and_column() {
        let text = sample_file(&["a,,,,1,2,3", "b,,,,1,oops,3"]);
        match read_decays_from(text.as_bytes()).unwrap_err() {
            DataError::Parse { line, column, .. } => {
                assert_eq!(line, 4);
                assert_eq!(column, "m2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_ignored() {
        let text = "# ipvae-decays v1; d=2; delay_ms=120; window_ms=40\n\
                    id,vp_mv,current_ma,label,station,m1,m2\n\
                    a,,,,L100E,4,2\n";
        let decays = read_decays_from(text.as_bytes()).unwrap();
        assert_eq!(decays[0].windows, vec![4.0, 2.0]);
    }

    #[test]
    fn bad_headers() {
        assert!(read_decays_from("id,m1\n".as_bytes()).is_err());
        assert!(read_decays_from("# other v1; d=2\n".as_bytes()).is_err());
        assert!(read_decays_from("# ipvae-decays v1; delay_ms=1; window_ms=1\n".as_bytes()).is_err());
        let missing_window = "# ipvae-decays v1; d=3; delay_ms=120; window_ms=40\nid,m1,m2\n";
        let err = read_decays_from(missing_window.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("m3") && err.contains("d=3"), "{err}");
    }

    #[test]
    fn mixed_schemes_refused() {
        let mut decays = generate_ground_truth(&SyntheticSpec { n: 2, ..Default::default() }).unwrap();
        decays[1].scheme.delay_ms = 80.0;
        assert!(matches!(
            write_decays_to(&decays, &mut Vec::new()),
            Err(DataError::MixedSchemes)
        ));
    }
}
