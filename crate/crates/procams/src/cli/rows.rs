//! The benchmark results table: one row per scored projection.
//!
//! Fixed column schema; `lpips` and `fid` are reserved and always empty
//! (they would require pretrained networks). `ms` is wall-clock and is
//! excluded from reproducibility hashes.

use std::fs::OpenOptions;
use std::path::Path;

use super::CliError;

pub const CSV_HEADER: &str = "setup_id,image_id,k,method,psnr,rmse,ssim,de00,lpips,fid,clip_frac,ms";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub setup_id: String,
    pub image_id: String,
    /// Surface-prior count behind the photometric model.
    pub k: usize,
    /// What was projected: "compensated", "uncompensated", ...
    pub method: String,
    pub psnr: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub de00: f64,
    /// Fraction of drive pixels clipped into gamut.
    pub clip_frac: f64,
    /// Wall-clock for producing this row's projection.
    pub ms: f64,
}

/// Append rows to `path`, creating it with the schema header first.
pub fn append_rows(path: &Path, rows: &[BenchRow]) -> Result<(), CliError> {
    let existed = path.is_file();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let fail = |e: csv::Error| CliError::run(format!("{}: {e}", path.display()));
    if !existed {
        w.write_record(CSV_HEADER.split(',')).map_err(fail)?;
    }
    for r in rows {
        w.write_record([
            r.setup_id.as_str(),
            r.image_id.as_str(),
            &r.k.to_string(),
            r.method.as_str(),
            &format!("{:.6}", r.psnr),
            &format!("{:.8}", r.rmse),
            &format!("{:.6}", r.ssim),
            &format!("{:.6}", r.de00),
            "",
            "",
            &format!("{:.6}", r.clip_frac),
            &format!("{:.3}", r.ms),
        ])
        .map_err(fail)?;
    }
    w.flush()
        .map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Read a results table back. The header must carry the schema columns
/// (extras are ignored); empty numeric cells read as zero.
pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>, CliError> {
    let fail = |what: String| CliError::Usage(format!("{}: {what}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("missing column {name:?}")))
    };
    let (c_setup, c_image, c_k, c_method) = (
        col("setup_id")?,
        col("image_id")?,
        col("k")?,
        col("method")?,
    );
    let (c_psnr, c_rmse, c_ssim, c_de00) =
        (col("psnr")?, col("rmse")?, col("ssim")?, col("de00")?);
    let (c_clip, c_ms) = (col("clip_frac")?, col("ms")?);

    let num = |record: &csv::StringRecord, c: usize| -> Result<f64, CliError> {
        let cell = record.get(c).unwrap_or("");
        if cell.is_empty() {
            return Ok(0.0);
        }
        cell.parse()
            .map_err(|_| fail(format!("bad number {cell:?}")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        rows.push(BenchRow {
            setup_id: record.get(c_setup).unwrap_or("").to_string(),
            image_id: record.get(c_image).unwrap_or("").to_string(),
            k: record
                .get(c_k)
                .unwrap_or("")
                .parse()
                .map_err(|_| fail("bad prior count".into()))?,
            method: record.get(c_method).unwrap_or("").to_string(),
            psnr: num(&record, c_psnr)?,
            rmse: num(&record, c_rmse)?,
            ssim: num(&record, c_ssim)?,
            de00: num(&record, c_de00)?,
            clip_frac: num(&record, c_clip)?,
            ms: num(&record, c_ms)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, k: usize, psnr: f64) -> BenchRow {
        BenchRow {
            setup_id: id.into(),
            image_id: "000".into(),
            k,
            method: "compensated".into(),
            psnr,
            rmse: 0.01,
            ssim: 0.98,
            de00: 1.75,
            clip_frac: 0.125,
            ms: 12.5,
        }
    }

    #[test]
    fn rows_roundtrip_and_append_keeps_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        append_rows(&path, &[row("a", 1, 15.0)]).unwrap();
        append_rows(&path, &[row("b", 5, 21.0)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        // Reserved columns stay empty.
        assert!(text.lines().nth(1).unwrap().contains(",,,"));

        let rows = read_rows(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].setup_id, "a");
        assert_eq!(rows[1].k, 5);
        assert!((rows[1].psnr - 21.0).abs() < 1e-9);
        assert!((rows[0].ms - 12.5).abs() < 1e-9);
    }

    #[test]
    fn commas_in_identifiers_survive_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        append_rows(&path, &[row("weird,id", 3, 18.0)]).unwrap();
        let rows = read_rows(&path).unwrap();
        assert_eq!(rows[0].setup_id, "weird,id");
    }

    #[test]
    fn missing_columns_are_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "setup_id,psnr\na,1.0\n").unwrap();
        assert!(matches!(read_rows(&path), Err(CliError::Usage(_))));
    }
}
