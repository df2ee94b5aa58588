//! Reading and writing datasets as `x,delta,a,z1..zk` CSV.

use std::path::Path;

use podds_core::{CovariateLaw, Observation};

use crate::error::{HarnessError, Result};

/// Reads a dataset and attaches support indices from `law` so that per-profile
/// odds tables resolve. Rows whose covariates are not in the support are rejected.
pub fn read_dataset(path: &Path, law: &CovariateLaw) -> Result<Vec<Observation>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let k = law.dim();
    let expected: Vec<String> = ["x", "delta", "a"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=k).map(|i| format!("z{i}")))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(HarnessError::Config(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| HarnessError::Config(format!("{}: row {}: {what}", path.display(), line + 1));
        let num = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("column {i} is not a number")))
        };
        let flag = |i: usize| -> Result<u8> {
            match record[i].trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(bad(&format!("expected 0 or 1, got {other:?}"))),
            }
        };
        let z: Vec<f64> = (0..k).map(|i| num(3 + i)).collect::<Result<_>>()?;
        let index = law
            .find(&z)
            .ok_or_else(|| bad(&format!("covariates {z:?} are not in the support")))?;
        let obs = Observation::new(num(0)?, flag(1)?, flag(2)?, law.profile(index)).map_err(|e| bad(&e.to_string()))?;
        out.push(obs);
    }
    if out.is_empty() {
        return Err(HarnessError::Config(format!("{}: no observations", path.display())));
    }
    Ok(out)
}

pub fn write_dataset(data: &[Observation], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    podds_core::data::write_csv(data, std::io::BufWriter::new(file)).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn round_trip() {
        let s = Scenario::builtin("s2").unwrap();
        let data = s.generator().unwrap().generate(200, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&data, &path).unwrap();
        let back = read_dataset(&path, &s.treatment.law).unwrap();
        assert_eq!(back.len(), data.len());
        for (a, b) in back.iter().zip(&data) {
            assert_eq!((a.x, a.delta, a.a, a.z.key()), (b.x, b.delta, b.a, b.z.key()));
        }
    }

    #[test]
    fn rejects_unknown_covariates_and_headers() {
        let s = Scenario::builtin("s1").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,delta,a,z1\n0.5,1,0,3.0\n").unwrap();
        assert!(read_dataset(&path, &s.treatment.law).is_err());
        std::fs::write(&path, "t,delta,a,z1\n0.5,1,0,1.0\n").unwrap();
        assert!(read_dataset(&path, &s.treatment.law).is_err());
        std::fs::write(&path, "x,delta,a,z1\n0.5,1,0,1.0\n").unwrap();
        assert_eq!(read_dataset(&path, &s.treatment.law).unwrap().len(), 1);
    }
}
