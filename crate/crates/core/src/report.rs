use std::fs;
use std::path::Path;

use crate::error::{ParseFailure, Result, TomoError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityItem {
    pub index: usize,
    pub ssim: f64,
    pub psnr: f64,
}

/// Per-item SSIM/PSNR with mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub per_item: Vec<QualityItem>,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    pub mean_psnr: f64,
    pub std_psnr: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl QualityReport {
    pub fn from_items(per_item: Vec<QualityItem>) -> Self {
        let (mean_ssim, std_ssim) = mean_std(per_item.iter().map(|i| i.ssim));
        let (mean_psnr, std_psnr) = mean_std(per_item.iter().map(|i| i.psnr));
        QualityReport {
            per_item,
            mean_ssim,
            std_ssim,
            mean_psnr,
            std_psnr,
        }
    }

    /// CSV `index,ssim,psnr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,ssim,psnr\n");
        for item in &self.per_item {
            out.push_str(&format!("{},{},{}\n", item.index, item.ssim, item.psnr));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| TomoError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
        let err = |kind, message: String| TomoError::Parse {
            path: path.to_path_buf(),
            kind,
            message,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("index,ssim,psnr") {
            return Err(err(ParseFailure::Syntax, "expected header 'index,ssim,psnr'".into()));
        }
        let mut items = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(ParseFailure::Syntax, format!("malformed row '{line}'")));
            }
            let bad = |f: &str| err(ParseFailure::BadValue, format!("bad field '{f}'"));
            items.push(QualityItem {
                index: fields[0].parse().map_err(|_| bad(fields[0]))?,
                ssim: fields[1].parse().map_err(|_| bad(fields[1]))?,
                psnr: fields[2].parse().map_err(|_| bad(fields[2]))?,
            });
        }
        Ok(QualityReport::from_items(items))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_item_has_zero_spread() {
        let r = QualityReport::from_items(vec![QualityItem { index: 0, ssim: 0.7, psnr: 31.0 }]);
        assert_eq!(r.mean_ssim, 0.7);
        assert_eq!(r.std_ssim, 0.0);
        assert_eq!(r.mean_psnr, 31.0);
        assert_eq!(r.std_psnr, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let r = QualityReport::from_items(vec![
            QualityItem { index: 0, ssim: 0.25, psnr: 18.5 },
            QualityItem { index: 1, ssim: 0.125, psnr: 200.0 },
        ]);
        r.write_csv(&path).unwrap();
        assert_eq!(QualityReport::read_csv(&path).unwrap(), r);
        assert!(fs::read_to_string(&path).unwrap().starts_with("index,ssim,psnr\n"));
    }
}
