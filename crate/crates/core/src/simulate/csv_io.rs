//! CSV ingestion and serialization.
//!
//! Price files: header `date,hour,price`, ISO dates, hour in 0..23,
//! decimal point, UTF-8. Every date must carry all 24 hours; DST-shortened
//! or -lengthened days are rejected with a pre-processing hint rather than
//! silently imputed.
//!
//! Ensemble files: header `date,member,hour,price` with member indices
//! `0..M-1` and a full hour grid per member.

use super::SimulateError;
use crate::domain::{PriceDay, ScenarioEnsemble};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::path::Path;

const HOURS: usize = 24;

fn csv_err(msg: impl Into<String>) -> SimulateError {
    SimulateError::Csv(msg.into())
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, SimulateError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(format!("{}: {e}", path.display())))
}

fn check_header(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    path: &Path,
) -> Result<(), SimulateError> {
    let headers = reader
        .headers()
        .map_err(|e| csv_err(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(csv_err(format!(
            "{}: expected header {:?}, got {:?}",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Load realized hourly prices, one `PriceDay` per calendar date in date
/// order.
pub fn load_price_csv(path: &Path) -> Result<Vec<PriceDay>, SimulateError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["date", "hour", "price"], path)?;

    let mut days: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_err(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(csv_err(format!("line {line}: expected 3 fields")));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| csv_err(format!("line {line}: bad date {:?}", &record[0])))?;
        let hour: usize = record[1]
            .parse()
            .map_err(|_| csv_err(format!("line {line}: bad hour {:?}", &record[1])))?;
        if hour >= HOURS {
            return Err(csv_err(format!(
                "line {line}: hour {hour} outside 0..{}",
                HOURS - 1
            )));
        }
        let price: f64 = record[2]
            .parse()
            .map_err(|_| csv_err(format!("line {line}: bad price {:?}", &record[2])))?;
        if !price.is_finite() {
            return Err(csv_err(format!("line {line}: non-finite price")));
        }
        let slots = days.entry(date).or_insert_with(|| vec![None; HOURS]);
        if slots[hour].is_some() {
            return Err(csv_err(format!(
                "duplicate entry for {date} hour {hour} (line {line}); \
                 a 25-hour DST day must be pre-processed (drop one reading)"
            )));
        }
        slots[hour] = Some(price);
    }

    let mut out = Vec::with_capacity(days.len());
    for (date, slots) in days {
        let present = slots.iter().filter(|s| s.is_some()).count();
        if let Some(missing) = slots.iter().position(|s| s.is_none()) {
            let hint = if present == HOURS - 1 {
                "; a 23-hour DST day must be pre-processed (duplicate the adjacent hour)"
            } else {
                ""
            };
            return Err(csv_err(format!(
                "{date}: missing hour {missing}{hint}"
            )));
        }
        let prices = slots.into_iter().map(Option::unwrap).collect();
        out.push(PriceDay::new(date.to_string(), prices)?);
    }
    Ok(out)
}

/// Serialize ensembles as `date,member,hour,price` rows.
pub fn write_ensemble_csv(
    path: &Path,
    ensembles: &[ScenarioEnsemble],
) -> Result<(), SimulateError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| csv_err(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["date", "member", "hour", "price"])
        .map_err(|e| csv_err(e.to_string()))?;
    for ensemble in ensembles {
        for (m, path_values) in ensemble.paths().iter().enumerate() {
            for (h, price) in path_values.iter().enumerate() {
                writer
                    .write_record([
                        ensemble.date_tag().to_string(),
                        m.to_string(),
                        h.to_string(),
                        format!("{price:?}"),
                    ])
                    .map_err(|e| csv_err(e.to_string()))?;
            }
        }
    }
    writer.flush().map_err(|e| csv_err(e.to_string()))?;
    Ok(())
}

/// Load ensembles grouped by date tag, in date order. Member indices must
/// be contiguous from zero and every member needs the full hour grid.
pub fn load_ensemble_csv(path: &Path) -> Result<Vec<ScenarioEnsemble>, SimulateError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &["date", "member", "hour", "price"], path)?;

    type MemberMap = BTreeMap<usize, Vec<Option<f64>>>;
    let mut dates: BTreeMap<String, MemberMap> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_err(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(csv_err(format!("line {line}: expected 4 fields")));
        }
        let date = record[0].to_string();
        let member: usize = record[1]
            .parse()
            .map_err(|_| csv_err(format!("line {line}: bad member {:?}", &record[1])))?;
        let hour: usize = record[2]
            .parse()
            .map_err(|_| csv_err(format!("line {line}: bad hour {:?}", &record[2])))?;
        if hour >= HOURS {
            return Err(csv_err(format!(
                "line {line}: hour {hour} outside 0..{}",
                HOURS - 1
            )));
        }
        let price: f64 = record[3]
            .parse()
            .map_err(|_| csv_err(format!("line {line}: bad price {:?}", &record[3])))?;
        let members = dates.entry(date).or_default();
        let slots = members.entry(member).or_insert_with(|| vec![None; HOURS]);
        if slots[hour].is_some() {
            return Err(csv_err(format!(
                "line {line}: duplicate (date, member, hour) entry"
            )));
        }
        slots[hour] = Some(price);
    }

    let mut out = Vec::with_capacity(dates.len());
    for (date, members) in dates {
        let m = members.len();
        let mut paths = Vec::with_capacity(m);
        for want in 0..m {
            let Some(slots) = members.get(&want) else {
                return Err(csv_err(format!(
                    "{date}: member indices not contiguous (missing member {want})"
                )));
            };
            if let Some(missing) = slots.iter().position(|s| s.is_none()) {
                return Err(csv_err(format!(
                    "{date}: member {want} missing hour {missing}"
                )));
            }
            paths.push(slots.iter().map(|s| s.unwrap()).collect());
        }
        out.push(ScenarioEnsemble::new(date, paths)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn full_day_rows(date: &str, base: f64) -> String {
        (0..24)
            .map(|h| format!("{date},{h},{}\n", base + h as f64))
            .collect()
    }

    #[test]
    fn two_day_file_in_date_order() {
        let mut content = String::from("date,hour,price\n");
        // Intentionally out of order on disk.
        content.push_str(&full_day_rows("2021-01-02", 100.0));
        content.push_str(&full_day_rows("2021-01-01", 50.0));
        let f = write_tmp(&content);
        let days = load_price_csv(f.path()).unwrap();
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].date_tag(), "2021-01-01");
        assert_eq!(days[1].date_tag(), "2021-01-02");
        assert_eq!(days[0].prices()[3], 53.0);
    }

    #[test]
    fn hour_24_is_rejected_with_line_number() {
        let content = "date,hour,price\n2021-01-01,24,10.0\n";
        let f = write_tmp(content);
        let err = load_price_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("hour 24"), "{err}");
    }

    #[test]
    fn missing_hour_names_date_and_hour() {
        let mut content = String::from("date,hour,price\n");
        for h in 0..24 {
            if h != 13 {
                content.push_str(&format!("2021-03-28,{h},10.0\n"));
            }
        }
        let f = write_tmp(&content);
        let err = load_price_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("2021-03-28"), "{err}");
        assert!(err.contains("hour 13"), "{err}");
        assert!(err.contains("DST"), "{err}");
    }

    #[test]
    fn duplicate_hour_rejected() {
        let mut content = String::from("date,hour,price\n");
        content.push_str(&full_day_rows("2021-01-01", 0.0));
        content.push_str("2021-01-01,5,99.0\n");
        let f = write_tmp(&content);
        let err = load_price_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn ensemble_round_trip() {
        let ens = vec![
            ScenarioEnsemble::new("2021-01-01", vec![vec![1.25; 24], vec![2.5; 24]]).unwrap(),
            ScenarioEnsemble::new("2021-01-02", vec![vec![-3.0; 24]]).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.csv");
        write_ensemble_csv(&path, &ens).unwrap();
        let loaded = load_ensemble_csv(&path).unwrap();
        assert_eq!(loaded, ens);
    }
}
