//! Sensor traces: per-interval vehicle counts for a set of sensors.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficTrace {
    pub sensors: Vec<String>,
    pub interval_seconds: f64,
    /// Timestamp of the first row in seconds.
    pub start: f64,
    /// One row per interval, one column per sensor.
    pub values: Vec<Vec<f64>>,
}

impl TrafficTrace {
    pub fn new(sensors: Vec<String>, interval_seconds: f64, start: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let t = TrafficTrace {
            sensors,
            interval_seconds,
            start,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval_seconds > 0.0) {
            return Err(Error::InvalidInput("interval length must be positive".into()));
        }
        if self.sensors.is_empty() {
            return Err(Error::InvalidInput("trace has no sensors".into()));
        }
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != self.sensors.len() {
                return Err(Error::InvalidInput(format!(
                    "row {r} has {} values for {} sensors",
                    row.len(),
                    self.sensors.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!("row {r} has a missing or negative value")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, row: usize) -> f64 {
        self.start + row as f64 * self.interval_seconds
    }

    /// Rows `from..to` as a new trace.
    pub fn slice(&self, from: usize, to: usize) -> TrafficTrace {
        TrafficTrace {
            sensors: self.sensors.clone(),
            interval_seconds: self.interval_seconds,
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
        }
    }

    pub fn column(&self, sensor: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |r| r[sensor])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_owned()];
        header.extend(self.sensors.iter().cloned());
        out.write_record(&header).map_err(csv_err)?;
        for (r, row) in self.values.iter().enumerate() {
            let mut rec = vec![format_number(self.timestamp(r))];
            rec.extend(row.iter().map(|&v| format_number(v)));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a `timestamp,<sensor>...` CSV. Timestamps must be evenly spaced.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("timestamp") {
            return Err(Error::Parse("first column must be `timestamp`".into()));
        }
        let sensors: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut stamps = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
                .collect::<Result<_>>()?;
            stamps.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        let interval = if stamps.len() >= 2 { stamps[1] - stamps[0] } else { 1.0 };
        for (i, w) in stamps.windows(2).enumerate() {
            if ((w[1] - w[0]) - interval).abs() > 1e-6 {
                return Err(Error::Parse(format!("uneven timestamp spacing at row {}", i + 1)));
            }
        }
        TrafficTrace::new(sensors, interval, stamps.first().copied().unwrap_or(0.0), values)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = TrafficTrace::new(
            vec!["a".into(), "b".into()],
            15.0,
            30.0,
            vec![vec![1.0, 2.0], vec![0.0, 3.5], vec![4.0, 0.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,a,b\n30,1,2\n45,0,3.5\n"));
        assert_eq!(TrafficTrace::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(TrafficTrace::new(vec!["a".into()], 15.0, 0.0, vec![vec![1.0, 2.0]]).is_err());
        let bad = "timestamp,a\n0,1\n15,2\n40,3\n";
        assert!(TrafficTrace::read_csv(bad.as_bytes()).is_err());
    }
}
