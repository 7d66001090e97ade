//! Count-based run values of a called strike.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitchdata::{Count, PitchRecord};

/// Per-count run expectancies after a called ball and after a called strike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunValueRow {
    pub count: Count,
    pub e_runs_ball: f64,
    pub e_runs_strike: f64,
    pub rho: f64,
    pub se_ball: f64,
    pub se_strike: f64,
    pub se_rho: f64,
    pub proportion: f64,
    pub n_ball: u64,
    pub n_strike: u64,
}

/// Twelve rows, stored in `Count::index` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunValueTable {
    rows: Vec<RunValueRow>,
}

/// Published 2011-2014 means: (balls, strikes, after ball, after strike, share of taken pitches).
pub const REFERENCE_RUN_VALUES: [(u8, u8, f64, f64, f64); 12] = [
    (0, 0, 0.367, 0.305, 0.362),
    (0, 1, 0.322, 0.265, 0.125),
    (0, 2, 0.276, 0.178, 0.055),
    (1, 0, 0.427, 0.324, 0.115),
    (1, 1, 0.364, 0.280, 0.088),
    (1, 2, 0.302, 0.162, 0.069),
    (2, 0, 0.571, 0.370, 0.039),
    (2, 1, 0.468, 0.309, 0.040),
    (2, 2, 0.383, 0.165, 0.048),
    (3, 0, 0.786, 0.481, 0.019),
    (3, 1, 0.730, 0.403, 0.018),
    (3, 2, 0.706, 0.166, 0.021),
];

impl RunValueTable {
    /// A table from stated means and shares. Shares are renormalized to sum
    /// to one; standard errors and cell sizes are zero.
    pub fn from_means(rows: &[(Count, f64, f64, f64)]) -> Result<Self> {
        let mut seen = [false; 12];
        let total: f64 = rows.iter().map(|r| r.3).sum();
        if rows.len() != 12 || !(total > 0.0) {
            return Err(Error::InvalidInput(
                "a run value table needs one row per count and positive shares".into(),
            ));
        }
        let mut out: Vec<Option<RunValueRow>> = vec![None; 12];
        for &(count, ball, strike, share) in rows {
            if seen[count.index()] {
                return Err(Error::InvalidInput(format!("count {count} listed twice")));
            }
            if !(ball.is_finite() && strike.is_finite() && share >= 0.0) {
                return Err(Error::InvalidInput(format!("bad values for count {count}")));
            }
            seen[count.index()] = true;
            out[count.index()] = Some(RunValueRow {
                count,
                e_runs_ball: ball,
                e_runs_strike: strike,
                rho: ball - strike,
                se_ball: 0.0,
                se_strike: 0.0,
                se_rho: 0.0,
                proportion: share / total,
                n_ball: 0,
                n_strike: 0,
            });
        }
        Ok(RunValueTable {
            rows: out.into_iter().map(|r| r.expect("all counts present")).collect(),
        })
    }

    /// The published 2011-2014 table.
    pub fn reference() -> Self {
        let rows: Vec<_> = REFERENCE_RUN_VALUES
            .iter()
            .map(|&(b, s, ball, strike, share)| {
                (
                    Count::new(b as i64, s as i64).expect("valid count"),
                    ball,
                    strike,
                    share,
                )
            })
            .collect();
        Self::from_means(&rows).expect("reference table is well formed")
    }

    pub fn rows(&self) -> &[RunValueRow] {
        &self.rows
    }

    pub fn row(&self, count: Count) -> &RunValueRow {
        &self.rows[count.index()]
    }

    pub fn rho_of(&self, count: Count) -> f64 {
        self.rows[count.index()].rho
    }

    pub fn rho(&self, balls: i64, strikes: i64) -> Result<f64> {
        Ok(self.rho_of(Count::new(balls, strikes)?))
    }

    /// Every run quantity multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| RunValueRow {
                e_runs_ball: r.e_runs_ball * k,
                e_runs_strike: r.e_runs_strike * k,
                rho: r.rho * k,
                se_ball: r.se_ball * k.abs(),
                se_strike: r.se_strike * k.abs(),
                se_rho: r.se_rho * k.abs(),
                ..r.clone()
            })
            .collect();
        RunValueTable { rows }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "count",
            "ball",
            "strike",
            "rho",
            "proportion",
            "se_ball",
            "se_strike",
            "se_rho",
            "n_ball",
            "n_strike",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.count.to_string(),
                r.e_runs_ball.to_string(),
                r.e_runs_strike.to_string(),
                r.rho.to_string(),
                r.proportion.to_string(),
                r.se_ball.to_string(),
                r.se_strike.to_string(),
                r.se_rho.to_string(),
                r.n_ball.to_string(),
                r.n_strike.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<run value csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a table written by `write_csv`. Only `count`, `ball`, `strike`
    /// and `proportion` are required; `rho` is recomputed from the means.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &'static str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(Error::MissingColumn(name.to_string()))
        };
        let (ic, ib, is, ip) = (col("count")?, col("ball")?, col("strike")?, col("proportion")?);
        let optional: HashMap<&str, usize> = ["se_ball", "se_strike", "n_ball", "n_strike"]
            .into_iter()
            .filter_map(|n| headers.iter().position(|h| h == n).map(|i| (n, i)))
            .collect();
        let mut means = Vec::new();
        let mut extra = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad number in run value row {:?}", rec)))
            };
            let count: Count = rec.get(ic).unwrap_or("").parse()?;
            means.push((count, num(ib)?, num(is)?, num(ip)?));
            let get = |n: &str| optional.get(n).map(|&i| num(i)).transpose();
            extra.push((
                count,
                get("se_ball")?,
                get("se_strike")?,
                get("n_ball")?,
                get("n_strike")?,
            ));
        }
        let mut table = Self::from_means(&means)?;
        for (count, sb, ss, nb, ns) in extra {
            let r = &mut table.rows[count.index()];
            r.se_ball = sb.unwrap_or(0.0);
            r.se_strike = ss.unwrap_or(0.0);
            r.se_rho = r.se_ball.hypot(r.se_strike);
            r.n_ball = nb.unwrap_or(0.0) as u64;
            r.n_strike = ns.unwrap_or(0.0) as u64;
        }
        Ok(table)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[derive(Clone, Copy, Default)]
struct Cell {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Cell {
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean; zero for a single observation.
    fn se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Empirical run values from taken pitches with known runs to the end of the inning.
pub fn run_expectancy_table(pitches: &[PitchRecord]) -> Result<RunValueTable> {
    let mut cells = [[Cell::default(); 2]; 12];
    let mut total = 0u64;
    for p in pitches {
        let Some(call) = p.call else { continue };
        let r = p.runs_rest_of_inning as f64;
        let c = &mut cells[p.count.index()][call.is_strike() as usize];
        c.n += 1;
        c.sum += r;
        c.sum_sq += r * r;
        total += 1;
    }
    let mut rows = Vec::with_capacity(12);
    for (i, [ball, strike]) in cells.iter().enumerate() {
        let count = Count::from_index(i);
        for (cell, name) in [(ball, "ball"), (strike, "strike")] {
            if cell.n == 0 {
                return Err(Error::EmptyCell {
                    count: count.to_string(),
                    call: name.to_string(),
                });
            }
        }
        let (se_ball, se_strike) = (ball.se(), strike.se());
        rows.push(RunValueRow {
            count,
            e_runs_ball: ball.mean(),
            e_runs_strike: strike.mean(),
            rho: ball.mean() - strike.mean(),
            se_ball,
            se_strike,
            se_rho: (se_ball * se_ball + se_strike * se_strike).sqrt(),
            proportion: (ball.n + strike.n) as f64 / total as f64,
            n_ball: ball.n,
            n_strike: strike.n,
        });
    }
    Ok(RunValueTable { rows })
}

/// Run value of a called strike averaged over counts by their share of taken pitches.
pub fn weighted_average_strike_value(table: &RunValueTable) -> f64 {
    table.rows.iter().map(|r| r.proportion * r.rho).sum()
}

/// The batting team's score immediately before and after one pitch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSnapshot {
    pub half_inning_id: String,
    pub score_before: u32,
    pub score_after: u32,
}

/// Runs scored from each pitch to the end of its half inning: the half
/// inning's final score minus the score before the pitch.
pub fn derive_runs_rest_of_inning(snapshots: &[ScoreSnapshot]) -> Result<Vec<u32>> {
    let mut last: HashMap<&str, u32> = HashMap::new();
    for s in snapshots {
        if s.score_after < s.score_before {
            return Err(Error::InvalidInput(format!(
                "score decreases within half inning {}",
                s.half_inning_id
            )));
        }
        let e = last.entry(s.half_inning_id.as_str()).or_insert(s.score_after);
        *e = (*e).max(s.score_after);
    }
    Ok(snapshots
        .iter()
        .map(|s| last[s.half_inning_id.as_str()] - s.score_before)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pitchdata::{Call, Hand};
    use proptest::prelude::*;

    fn taken(count: (i64, i64), strike: bool, runs: u32) -> PitchRecord {
        PitchRecord {
            pitch_id: "p".into(),
            season: 2014,
            half_inning_id: "h".into(),
            umpire_id: "u".into(),
            batter_id: "b".into(),
            catcher_id: "c".into(),
            pitcher_id: "p".into(),
            batter_hand: Hand::R,
            pitcher_hand: Hand::R,
            count: Count::new(count.0, count.1).unwrap(),
            x: 0.0,
            z: 2.5,
            sz_top: 3.5,
            sz_bot: 1.5,
            taken: true,
            call: Some(if strike { Call::Strike } else { Call::Ball }),
            runs_rest_of_inning: runs,
        }
    }

    /// One ball and one strike in every count, plus `extra`.
    fn filled(extra: Vec<PitchRecord>) -> Vec<PitchRecord> {
        let mut v: Vec<PitchRecord> = Count::all()
            .flat_map(|c| {
                let (b, s) = (c.balls() as i64, c.strikes() as i64);
                [taken((b, s), false, 0), taken((b, s), true, 0)]
            })
            .collect();
        v.extend(extra);
        v
    }

    #[test]
    fn hand_computed_means() {
        let mut ps: Vec<PitchRecord> = filled(vec![]);
        ps.retain(|p| p.count != Count::ZERO);
        ps.extend([
            taken((0, 0), false, 1),
            taken((0, 0), false, 0),
            taken((0, 0), true, 0),
            taken((0, 0), true, 0),
        ]);
        let t = run_expectancy_table(&ps).unwrap();
        let r = t.row(Count::ZERO);
        assert_eq!((r.e_runs_ball, r.e_runs_strike, r.rho), (0.5, 0.0, 0.5));
        assert_eq!((r.n_ball, r.n_strike), (2, 2));
        // sd of {1, 0} is 1/sqrt(2); se = 1/2
        assert!((r.se_ball - 0.5).abs() < 1e-15);
        assert_eq!(r.se_strike, 0.0);
    }

    #[test]
    fn empty_cell_is_named() {
        let mut ps = filled(vec![]);
        ps.retain(|p| !(p.count == Count::new(3, 2).unwrap() && p.is_called_strike()));
        let err = run_expectancy_table(&ps).unwrap_err();
        assert_eq!(err.to_string(), "no observations for count 3-2 after a called strike");
    }

    #[test]
    fn reference_values() {
        let t = RunValueTable::reference();
        for ((b, s), want) in [((3, 2), 0.540), ((0, 0), 0.062), ((2, 2), 0.218), ((0, 1), 0.057)] {
            assert!((t.rho(b, s).unwrap() - want).abs() < 0.0005);
        }
        assert!(t.rho(4, 0).is_err());
        let w = weighted_average_strike_value(&t);
        assert!((w - 0.11).abs() < 0.005, "{w}");
        let total: f64 = t.rows().iter().map(|r| r.proportion).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rho_with_uniform_shares() {
        let rows: Vec<_> = Count::all().map(|c| (c, 0.4, 0.15, 1.0)).collect();
        let t = RunValueTable::from_means(&rows).unwrap();
        assert!((weighted_average_strike_value(&t) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let t = run_expectancy_table(&filled(vec![taken((1, 1), false, 3), taken((1, 1), true, 1)])).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = RunValueTable::read_csv(buf.as_slice()).unwrap();
        for (a, b) in t.rows().iter().zip(back.rows()) {
            assert_eq!(a.count, b.count);
            assert_eq!(a.rho, b.rho);
            assert_eq!((a.n_ball, a.n_strike), (b.n_ball, b.n_strike));
            assert!((a.se_rho - b.se_rho).abs() < 1e-15);
            assert!((a.proportion - b.proportion).abs() < 1e-15);
        }
    }

    #[test]
    fn runs_rest_of_inning_from_snapshots() {
        let s = |h: &str, before, after| ScoreSnapshot {
            half_inning_id: h.into(),
            score_before: before,
            score_after: after,
        };
        let snaps = [s("a", 0, 0), s("a", 0, 2), s("b", 5, 5), s("a", 2, 3), s("b", 5, 5)];
        assert_eq!(derive_runs_rest_of_inning(&snaps).unwrap(), vec![3, 3, 0, 1, 0]);
        assert!(derive_runs_rest_of_inning(&[s("a", 2, 1)]).is_err());
    }

    fn corpus() -> impl Strategy<Value = Vec<PitchRecord>> {
        prop::collection::vec((0i64..4, 0i64..3, any::<bool>(), 0u32..6), 0..60)
            .prop_map(|v| filled(v.into_iter().map(|(b, s, k, r)| taken((b, s), k, r)).collect()))
    }

    proptest! {
        #[test]
        fn table_invariants(ps in corpus()) {
            let t = run_expectancy_table(&ps).unwrap();
            let total: f64 = t.rows().iter().map(|r| r.proportion).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for r in t.rows() {
                prop_assert_eq!(r.rho, r.e_runs_ball - r.e_runs_strike);
                prop_assert!((r.se_rho * r.se_rho - r.se_ball * r.se_ball - r.se_strike * r.se_strike).abs() < 1e-12);
            }
            let dot: f64 = t.rows().iter().map(|r| r.proportion * r.rho).sum();
            prop_assert!((weighted_average_strike_value(&t) - dot).abs() < 1e-12);
        }

        #[test]
        fn scale_equivariance(ps in corpus(), k in 1u32..5) {
            let t = run_expectancy_table(&ps).unwrap();
            let scaled: Vec<PitchRecord> = ps.iter().cloned().map(|mut p| { p.runs_rest_of_inning *= k; p }).collect();
            let ts = run_expectancy_table(&scaled).unwrap();
            for (a, b) in t.rows().iter().zip(ts.rows()) {
                prop_assert!((a.rho * k as f64 - b.rho).abs() < 1e-9);
            }
        }

        #[test]
        fn order_invariance(ps in corpus(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = ps.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, b) = (run_expectancy_table(&ps).unwrap(), run_expectancy_table(&shuffled).unwrap());
            for (x, y) in a.rows().iter().zip(b.rows()) {
                prop_assert!((x.rho - y.rho).abs() < 1e-12);
            }
        }
    }
}
