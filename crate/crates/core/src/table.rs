//! CSV helpers shared by the exporters.

use crate::error::{Error, Result};

/// Fixed 9-decimal rendering used by every numeric CSV column. Negative zero prints as zero.
pub fn fmt_real(value: f64) -> String {
    let s = format!("{value:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Writes `header` and `rows` to an in-memory CSV document.
pub fn csv_bytes<I, R, S>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(header).expect("in-memory write");
    for row in rows {
        writer.write_record(row).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// Reads a CSV document whose header must start with `expected` columns (extra columns
/// are allowed only when `allow_extra` is set). Returns the header and the records.
pub fn read_csv(
    what: &str,
    bytes: &[u8],
    expected: &[&str],
    allow_extra: bool,
) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::malformed(what, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let prefix_ok = header.len() >= expected.len()
        && header.iter().zip(expected).all(|(h, e)| h == e)
        && (allow_extra || header.len() == expected.len());
    if !prefix_ok {
        return Err(Error::malformed(
            what,
            format!("header {:?}, expected {:?}", header.join(","), expected.join(",")),
        ));
    }
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::malformed(what, e))?;
    Ok((header, records))
}

pub fn parse_f64(what: &str, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::malformed(what, format!("`{field}` is not a finite number")))
}
