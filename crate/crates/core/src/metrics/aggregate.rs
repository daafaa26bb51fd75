use std::collections::BTreeMap;
use std::io::Write;

/// Per-file evaluation result for one preprocessor/mask combination.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub file: String,
    pub input_snr_db: f64,
    pub preproc: String,
    pub mask: String,
    pub si_sdr_db: f64,
    pub stoi: f64,
}

/// Half-open `[lo, hi)` or closed `[lo, hi]` SNR interval in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrBucket {
    pub lo: f64,
    pub hi: f64,
    pub inclusive_hi: bool,
}

impl SnrBucket {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            inclusive_hi: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            inclusive_hi: true,
        }
    }

    /// `[-20, -10)` and `[-10, 0]`.
    pub fn defaults() -> Vec<Self> {
        vec![Self::half_open(-20.0, -10.0), Self::closed(-10.0, 0.0)]
    }

    pub fn contains(&self, snr: f64) -> bool {
        snr >= self.lo && (snr < self.hi || (self.inclusive_hi && snr == self.hi))
    }

    pub fn label(&self) -> String {
        format!(
            "[{},{}{}",
            self.lo,
            self.hi,
            if self.inclusive_hi { "]" } else { ")" }
        )
    }
}

/// Mean metrics of one (bucket, preprocessor, mask) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub bucket: String,
    pub preproc: String,
    pub mask: String,
    pub count: usize,
    pub si_sdr_db: f64,
    pub stoi: f64,
}

/// Averages records per bucket, preprocessor and mask. Records outside
/// every bucket land in an `other` bucket listed last.
pub fn aggregate(records: &[MetricRecord], buckets: &[SnrBucket]) -> Vec<AggregateRow> {
    // (bucket index, preproc, mask) -> (count, Σ si-sdr, Σ stoi)
    let mut cells: BTreeMap<(usize, String, String), (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let idx = buckets
            .iter()
            .position(|b| b.contains(r.input_snr_db))
            .unwrap_or(buckets.len());
        let cell = cells
            .entry((idx, r.preproc.clone(), r.mask.clone()))
            .or_insert((0, 0.0, 0.0));
        cell.0 += 1;
        cell.1 += r.si_sdr_db;
        cell.2 += r.stoi;
    }
    cells
        .into_iter()
        .map(|((idx, preproc, mask), (n, sdr, stoi))| AggregateRow {
            bucket: buckets
                .get(idx)
                .map(SnrBucket::label)
                .unwrap_or_else(|| "other".to_string()),
            preproc,
            mask,
            count: n,
            si_sdr_db: sdr / n as f64,
            stoi: stoi / n as f64,
        })
        .collect()
}

/// One point of a metric-versus-SNR curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub preproc: String,
    pub mask: String,
    pub snr_db: f64,
    pub count: usize,
    pub si_sdr_db: f64,
    pub stoi: f64,
}

/// Means per preprocessor/mask over SNR bins of width `step` dB, each
/// reported at its centre.
pub fn snr_curves(records: &[MetricRecord], step: f64) -> Vec<CurvePoint> {
    let mut cells: BTreeMap<(String, String, i64), (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let bin = (r.input_snr_db / step).floor() as i64;
        let cell = cells
            .entry((r.preproc.clone(), r.mask.clone(), bin))
            .or_insert((0, 0.0, 0.0));
        cell.0 += 1;
        cell.1 += r.si_sdr_db;
        cell.2 += r.stoi;
    }
    cells
        .into_iter()
        .map(|((preproc, mask, bin), (n, sdr, stoi))| CurvePoint {
            preproc,
            mask,
            snr_db: (bin as f64 + 0.5) * step,
            count: n,
            si_sdr_db: sdr / n as f64,
            stoi: stoi / n as f64,
        })
        .collect()
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-file CSV: `file,input_snr_db,preproc,mask,si_sdr_db,stoi`, six
/// decimals, STOI clamped to `[0, 1]`.
pub fn write_metrics_csv<W: Write>(records: &[MetricRecord], mut out: W) -> std::io::Result<()> {
    out.write_all(b"file,input_snr_db,preproc,mask,si_sdr_db,stoi\n")?;
    for r in records {
        writeln!(
            out,
            "{},{:.6},{},{},{:.6},{:.6}",
            field(&r.file),
            r.input_snr_db,
            field(&r.preproc),
            field(&r.mask),
            r.si_sdr_db,
            r.stoi.clamp(0.0, 1.0)
        )?;
    }
    Ok(())
}

/// Bucket table. The `pesq` and `dnsmos` columns are left empty for values
/// merged from external tools.
pub fn write_summary_csv<W: Write>(rows: &[AggregateRow], mut out: W) -> std::io::Result<()> {
    out.write_all(b"bucket,preproc,mask,count,si_sdr_db,stoi,pesq,dnsmos\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},,",
            field(&r.bucket),
            field(&r.preproc),
            field(&r.mask),
            r.count,
            r.si_sdr_db,
            r.stoi.clamp(0.0, 1.0)
        )?;
    }
    Ok(())
}

pub fn write_curves_csv<W: Write>(points: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    out.write_all(b"preproc,mask,snr_db,count,si_sdr_db,stoi\n")?;
    for p in points {
        writeln!(
            out,
            "{},{},{:.6},{},{:.6},{:.6}",
            field(&p.preproc),
            field(&p.mask),
            p.snr_db,
            p.count,
            p.si_sdr_db,
            p.stoi.clamp(0.0, 1.0)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(file: &str, snr: f64, sdr: f64) -> MetricRecord {
        MetricRecord {
            file: file.into(),
            input_snr_db: snr,
            preproc: "cmpdr".into(),
            mask: "none".into(),
            si_sdr_db: sdr,
            stoi: 0.5,
        }
    }

    #[test]
    fn bucket_edges() {
        let b = SnrBucket::defaults();
        assert!(b[0].contains(-20.0));
        assert!(!b[0].contains(-10.0));
        assert!(b[1].contains(-10.0));
        assert!(b[1].contains(0.0));
        assert!(!b[1].contains(0.1));
        assert_eq!(b[0].label(), "[-20,-10)");
        assert_eq!(b[1].label(), "[-10,0]");
    }

    #[test]
    fn one_record_per_bucket() {
        let recs = vec![rec("a", -15.0, 1.0), rec("b", -5.0, 2.0)];
        let rows = aggregate(&recs, &SnrBucket::defaults());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].bucket, "[-20,-10)");
        assert_eq!(rows[0].si_sdr_db, 1.0);
        assert_eq!(rows[1].si_sdr_db, 2.0);
    }

    #[test]
    fn duplicates_do_not_move_means() {
        let recs = vec![rec("a", -15.0, 1.0), rec("b", -12.0, 3.0)];
        let mut doubled = recs.clone();
        doubled.extend(recs.clone());
        let a = aggregate(&recs, &SnrBucket::defaults());
        let b = aggregate(&doubled, &SnrBucket::defaults());
        assert_eq!(a[0].si_sdr_db, b[0].si_sdr_db);
        assert_eq!(b[0].count, 4);
    }

    #[test]
    fn out_of_range_goes_to_other() {
        let rows = aggregate(
            &[rec("a", 5.0, 1.0), rec("b", -15.0, 1.0)],
            &SnrBucket::defaults(),
        );
        assert_eq!(rows.last().unwrap().bucket, "other");
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 2);
    }

    #[test]
    fn csv_format() {
        let mut out = Vec::new();
        write_metrics_csv(&[rec("x.wav", -3.0, 1.5)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "file,input_snr_db,preproc,mask,si_sdr_db,stoi\nx.wav,-3.000000,cmpdr,none,1.500000,0.500000\n"
        );
    }

    #[test]
    fn curves_bin_by_step() {
        let pts = snr_curves(
            &[
                rec("a", -19.0, 1.0),
                rec("b", -18.5, 3.0),
                rec("c", -1.0, 0.0),
            ],
            2.0,
        );
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].snr_db, -19.0);
        assert_eq!(pts[0].si_sdr_db, 2.0);
    }
}
