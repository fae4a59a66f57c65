//! Price ingestion and construction of the problem matrices.
//!
//! Log-prices `S` are fitted with a VAR(1) model `S_t ≈ c + S_{t−1} B`.
//! With `Γ` the sample covariance of `S`, the instance is
//! `A = Γ + r_A I`, `M = BᵀΓB + r_M I` and `φ = multiplier · median(diag Γ) / 5`.
//! `xᵀMx / xᵀAx` is the Box–Tiao predictability of the portfolio `x`.

use std::io::Read;
use std::path::Path;

use chrono::{Days, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numerics::{Cholesky, SymMatrix};

/// Dense price panel, `T` rows (dates ascending) by `N` columns (assets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMatrix {
    tickers: Vec<String>,
    dates: Vec<String>,
    prices: Vec<Vec<f64>>,
    dropped_rows: usize,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

impl PriceMatrix {
    /// Build from rows already in order. Every price must be finite and positive.
    pub fn new(tickers: Vec<String>, dates: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::InvalidInput("no assets".into()));
        }
        if dates.len() != prices.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates for {} price rows",
                dates.len(),
                prices.len()
            )));
        }
        for (t, row) in prices.iter().enumerate() {
            if row.len() != tickers.len() {
                return Err(Error::InvalidInput(format!(
                    "row {t} has {} prices, expected {}",
                    row.len(),
                    tickers.len()
                )));
            }
            if let Some((j, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(Error::InvalidPrice {
                    row: t,
                    column: j,
                    value: v,
                });
            }
        }
        Ok(Self {
            tickers,
            dates,
            prices,
            dropped_rows: 0,
        })
    }

    /// Unlabelled panel with consecutive daily dates from 2000-01-01 and tickers `A0, A1, …`.
    pub fn from_rows(prices: Vec<Vec<f64>>) -> Result<Self> {
        let n = prices.first().map_or(0, Vec::len);
        let tickers = (0..n).map(|j| format!("A{j}")).collect();
        let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..prices.len() as u64)
            .map(|t| (base + Days::new(t)).format("%Y-%m-%d").to_string())
            .collect();
        Self::new(tickers, dates, prices)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.prices
    }

    /// Rows dropped during ingestion because of empty cells.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn t(&self) -> usize {
        self.prices.len()
    }

    pub fn log_prices(&self) -> Vec<Vec<f64>> {
        self.prices
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect()
    }

    /// First `t` rows and the remainder, e.g. for in-sample / out-of-sample windows.
    pub fn split_at(&self, t: usize) -> (PriceMatrix, PriceMatrix) {
        let t = t.min(self.t());
        let part = |r: std::ops::Range<usize>| PriceMatrix {
            tickers: self.tickers.clone(),
            dates: self.dates[r.clone()].to_vec(),
            prices: self.prices[r].to_vec(),
            dropped_rows: 0,
        };
        (part(0..t), part(t..self.t()))
    }

    /// Write as CSV with a `date,TICKER…` header.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header).map_err(io)?;
        for (d, row) in self.dates.iter().zip(&self.prices) {
            let mut rec = vec![d.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Read a `date,TICKER1,TICKER2,…` CSV file.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceMatrix> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_prices(file)
}

/// Parse CSV price data. Rows with an empty cell are dropped and counted;
/// rows are sorted by date.
pub fn parse_prices<R: Read>(reader: R) -> Result<PriceMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let ingest = |row: usize, column: usize, message: String| Error::Ingest {
        row,
        column,
        message,
    };
    let header = rdr
        .headers()
        .map_err(|e| ingest(0, 0, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(ingest(
            0,
            0,
            "header must be date followed by at least one ticker".into(),
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut rows: Vec<(NaiveDateTime, String, Vec<f64>)> = Vec::new();
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let rec = rec.map_err(|e| ingest(line, 0, e.to_string()))?;
        let date_str = rec.get(0).unwrap_or_default();
        let date = parse_timestamp(date_str)
            .ok_or_else(|| ingest(line, 0, format!("unparsable date {date_str:?}")))?;
        let mut prices = Vec::with_capacity(tickers.len());
        let mut gap = false;
        for (j, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                gap = true;
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest(line, j, format!("unparsable price {cell:?}")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidPrice {
                    row: line,
                    column: j,
                    value: v,
                });
            }
            prices.push(v);
        }
        if gap {
            dropped += 1;
        } else {
            rows.push((date, date_str.to_string(), prices));
        }
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ingest(0, 0, format!("duplicate date {}", w[0].1)));
    }
    let (dates, prices) = rows.into_iter().map(|(_, d, p)| (d, p)).unzip();
    let mut pm = PriceMatrix::new(tickers, dates, prices)?;
    pm.dropped_rows = dropped;
    Ok(pm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    /// Ridge on the VAR normal equations, relative to `trace(XᵀX)/N`.
    pub ridge_b: f64,
    /// Ridge added to `M`, relative to `trace(Γ)/N`.
    pub ridge_m: f64,
    /// Ridge added to `A`, relative to `trace(Γ)/N`.
    pub ridge_a: f64,
    pub phi_multiplier: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            ridge_b: 1e-6,
            ridge_m: 1e-8,
            ridge_a: 1e-8,
            phi_multiplier: 1.0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.ridge_b, self.ridge_m, self.ridge_a]
            .iter()
            .all(|r| r.is_finite() && *r >= 0.0);
        if !ok {
            return Err(Error::InvalidInput(
                "ridge terms must be nonnegative".into(),
            ));
        }
        if !(self.phi_multiplier.is_finite() && self.phi_multiplier > 0.0) {
            return Err(Error::InvalidInput(
                "phi multiplier must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows[0].len();
    let mut mean = vec![0.0; n];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

fn centered(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mean = column_means(rows);
    rows.iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect()
}

/// `XᵀY` for row-major samples.
fn cross(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (p, q) = (x[0].len(), y[0].len());
    let mut out = vec![vec![0.0; q]; p];
    for (xr, yr) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..q {
                out[i][j] += xr[i] * yr[j];
            }
        }
    }
    out
}

/// Sample covariance (divisor `T − 1`) of the columns of `s`.
pub fn sample_covariance(s: &[Vec<f64>]) -> Result<SymMatrix> {
    if s.len() < 2 {
        return Err(Error::InsufficientData {
            rows: s.len(),
            required: 2,
        });
    }
    let c = centered(s);
    let mut g = cross(&c, &c);
    let denom = (s.len() - 1) as f64;
    g.iter_mut().flatten().for_each(|v| *v /= denom);
    SymMatrix::from_rows(&g)
}

/// Least-squares VAR(1) coefficient `B` (row-major `N×N`) with an intercept,
/// so that `S_t ≈ c + S_{t−1} B`. The ridge is relative to `trace(XᵀX)/N`.
pub fn fit_var1(s: &[Vec<f64>], ridge: f64) -> Result<Vec<Vec<f64>>> {
    if s.len() < 3 {
        return Err(Error::InsufficientData {
            rows: s.len(),
            required: 3,
        });
    }
    let n = s[0].len();
    let x = centered(&s[..s.len() - 1]);
    let y = centered(&s[1..]);
    let xtx = SymMatrix::from_rows(&cross(&x, &x))?;
    let scale = (xtx.trace() / n as f64).max(f64::MIN_POSITIVE);
    let normal = xtx.add_diag(ridge * scale);
    let chol = Cholesky::factor(&normal)
        .map_err(|_| Error::Estimation("VAR(1) regression is singular; increase ridge_b".into()))?;
    let xty = cross(&x, &y);
    let mut b = vec![vec![0.0; n]; n];
    for j in 0..n {
        let rhs: Vec<f64> = xty.iter().map(|r| r[j]).collect();
        let col = chol.solve(&rhs);
        for i in 0..n {
            b[i][j] = col[i];
        }
    }
    Ok(b)
}

/// Median of `values`, averaging the two middle entries for even length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// The volatility threshold: one fifth of the median asset variance, scaled.
pub fn phi_rule(covariance_diag: &[f64], multiplier: f64) -> f64 {
    multiplier * median(covariance_diag) / 5.0
}

/// Estimated matrices along with the instance built from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub instance: ProblemInstance,
    pub var_coefficient: Vec<Vec<f64>>,
    pub covariance: SymMatrix,
}

pub fn estimate(p: &PriceMatrix, k: usize, cfg: &EstimationConfig) -> Result<Estimate> {
    cfg.validate()?;
    let (t, n) = (p.t(), p.n());
    if t < n + 2 {
        return Err(Error::InsufficientData {
            rows: t,
            required: n + 2,
        });
    }
    let s = p.log_prices();
    let gamma = sample_covariance(&s)?;
    let diag = gamma.diagonal();
    let scale = gamma.trace() / n as f64;
    // variance indistinguishable from rounding noise on the log-price level
    let flat = |j: usize| {
        let level = s.iter().map(|r| r[j].abs()).fold(1.0, f64::max);
        !(diag[j] > (1e-12 * level).powi(2))
    };
    if let Some(j) = (0..n).find(|&j| flat(j)) {
        return Err(Error::Estimation(format!(
            "asset {} has zero variance; flat price series cannot be used",
            p.tickers()[j]
        )));
    }
    let b = fit_var1(&s, cfg.ridge_b)?;
    // BᵀΓB with B row-major N×N
    let flat: Vec<f64> = b.iter().flatten().copied().collect();
    let m = gamma.congruence(&flat, n).add_diag(cfg.ridge_m * scale);
    let a = gamma.add_diag(cfg.ridge_a * scale);
    let phi = phi_rule(&diag, cfg.phi_multiplier);
    let instance = ProblemInstance::new(m, a, phi, k).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(msg),
        other => Error::Estimation(format!("estimated matrices are unusable: {other}")),
    })?;
    Ok(Estimate {
        instance,
        var_coefficient: b,
        covariance: gamma,
    })
}

/// Problem instance for cardinality `k` from a price panel.
pub fn build_instance(
    p: &PriceMatrix,
    k: usize,
    cfg: &EstimationConfig,
) -> Result<ProblemInstance> {
    estimate(p, k, cfg).map(|e| e.instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn parse(s: &str) -> Result<PriceMatrix> {
        parse_prices(s.as_bytes())
    }

    #[test]
    fn parses_well_formed_file() {
        let p = parse("date,AAA,BBB\n2020-01-01,1.0,2.0\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n")
            .unwrap();
        assert_eq!(p.tickers(), &["AAA", "BBB"]);
        assert_eq!(p.t(), 3);
        assert_eq!(p.rows()[2], vec![2.0, 3.0]);
        assert_eq!(p.dropped_rows(), 0);
    }

    #[test]
    fn drops_rows_with_gaps() {
        let p =
            parse("date,AAA,BBB\n2020-01-01,1.0,2.0\n2020-01-02,,2.5\n2020-01-03,2,3\n").unwrap();
        assert_eq!(p.t(), 2);
        assert_eq!(p.dropped_rows(), 1);
        assert_eq!(p.dates(), &["2020-01-01", "2020-01-03"]);
    }

    #[test]
    fn sorts_dates() {
        let p = parse("date,X\n2020-01-03,3\n2020-01-01,1\n2020-01-02T12:00:00,2\n").unwrap();
        assert_eq!(p.rows(), &[vec![1.0], vec![2.0], vec![3.0]]);
    }

    #[test]
    fn reports_bad_cells() {
        match parse("date,X,Y\n2020-01-01,1,abc\n") {
            Err(Error::Ingest { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("date,X\nyesterday,1\n"),
            Err(Error::Ingest { column: 0, .. })
        ));
        assert!(matches!(
            parse("date,X\n2020-01-01,-1\n"),
            Err(Error::InvalidPrice { .. })
        ));
        assert!(matches!(
            parse("date,X\n2020-01-01,1\n2020-01-01,2\n"),
            Err(Error::Ingest { .. })
        ));
    }

    #[test]
    fn phi_is_a_fifth_of_the_median_variance() {
        assert!((phi_rule(&[1.0, 2.0, 3.0], 1.0) - 0.4).abs() < 1e-15);
        assert!((phi_rule(&[3.0, 1.0, 2.0], 2.5) - 1.0).abs() < 1e-15);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn flat_prices_are_rejected() {
        let p = PriceMatrix::from_rows(vec![vec![1.0, 2.0]; 10]).unwrap();
        assert!(matches!(
            build_instance(&p, 1, &EstimationConfig::default()),
            Err(Error::Estimation(_))
        ));
        // one flat asset among moving ones
        let rows = (0..10).map(|t| vec![5.0, 7.0 + t as f64]).collect();
        let p = PriceMatrix::from_rows(rows).unwrap();
        assert!(matches!(
            build_instance(&p, 1, &EstimationConfig::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn short_panels_are_rejected() {
        let p =
            PriceMatrix::from_rows(vec![vec![1.0, 2.0], vec![1.1, 2.1], vec![1.2, 2.0]]).unwrap();
        assert!(matches!(
            build_instance(&p, 1, &EstimationConfig::default()),
            Err(Error::InsufficientData {
                rows: 3,
                required: 4
            })
        ));
    }

    #[test]
    fn noiseless_autoregression_is_recovered() {
        // one asset: deviations halve each step around a fixed level
        let s: Vec<Vec<f64>> = (0..12).map(|t| vec![0.3 + 0.5f64.powi(t)]).collect();
        let b = fit_var1(&s, 0.0).unwrap();
        assert!((b[0][0] - 0.5).abs() < 1e-10);

        // two assets with a full-rank regressor: S_t = c + S_{t-1} B
        let bt = [[0.5, 0.2], [-0.1, 0.3]];
        let mut rows = vec![vec![1.0, -2.0]];
        for _ in 0..30 {
            let prev = rows.last().unwrap().clone();
            rows.push(vec![
                0.1 + prev[0] * bt[0][0] + prev[1] * bt[1][0],
                -0.2 + prev[0] * bt[0][1] + prev[1] * bt[1][1],
            ]);
        }
        let rows: Vec<Vec<f64>> = rows[..12].to_vec();
        let b = fit_var1(&rows, 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((b[i][j] - bt[i][j]).abs() < 1e-8, "{b:?}");
            }
        }
    }

    fn random_walk_panel(seed: u64, t: usize, n: usize) -> PriceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = vec![0.0; n];
        let rows = (0..t)
            .map(|_| {
                for l in level.iter_mut() {
                    *l += 0.01 * rng.sample::<f64, _>(StandardNormal);
                }
                level.iter().map(|l| (4.0 + l).exp()).collect()
            })
            .collect();
        PriceMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn instance_is_well_formed() {
        let p = random_walk_panel(1, 120, 5);
        let e = estimate(&p, 3, &EstimationConfig::default()).unwrap();
        let d = e.covariance.diagonal();
        assert!((e.instance.phi() - median(&d) / 5.0).abs() < 1e-18);
        assert!(crate::numerics::lambda_min(e.instance.m()).unwrap() > 0.0);
        assert!(crate::numerics::lambda_min(e.instance.a()).unwrap() > 0.0);
    }

    #[test]
    fn uniform_rescaling_leaves_instance_unchanged() {
        let p = random_walk_panel(2, 80, 4);
        let scaled = PriceMatrix::from_rows(
            p.rows()
                .iter()
                .map(|r| r.iter().map(|v| v * 37.5).collect())
                .collect(),
        )
        .unwrap();
        let cfg = EstimationConfig::default();
        let (a, b) = (
            build_instance(&p, 2, &cfg).unwrap(),
            build_instance(&scaled, 2, &cfg).unwrap(),
        );
        let close = |x: &SymMatrix, y: &SymMatrix| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .all(|(u, v)| (u - v).abs() <= 1e-9 * x.max_abs())
        };
        assert!(close(a.m(), b.m()));
        assert!(close(a.a(), b.a()));
        assert!((a.phi() - b.phi()).abs() <= 1e-9 * a.phi());
    }

    #[test]
    fn csv_round_trip() {
        let p = random_walk_panel(3, 10, 3);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = parse_prices(buf.as_slice()).unwrap();
        assert_eq!(q.rows(), p.rows());
    }
}
