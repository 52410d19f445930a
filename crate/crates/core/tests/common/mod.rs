#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chronofuse::ingest::{extract_observations, load_report, MetricLexicon, Observation};
use chronofuse::store::{fuse, SliceGranularity, TemporalTable};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn lexicon() -> MetricLexicon {
    MetricLexicon::load(&fixture("lexicon.txt")).expect("fixture lexicon")
}

pub fn corpus_paths() -> Vec<PathBuf> {
    vec![fixture("corpus/report_a.txt"), fixture("corpus/report_b.csv")]
}

/// Observations per corpus report, in corpus order.
pub fn corpus_observations() -> Vec<Vec<Observation>> {
    let lex = lexicon();
    corpus_paths()
        .iter()
        .map(|p| {
            let doc = load_report(p, None).expect("fixture report");
            extract_observations(&doc, &lex)
                .expect("fixture extraction")
                .observations
        })
        .collect()
}

pub fn corpus_table() -> TemporalTable {
    let all: Vec<Observation> = corpus_observations().into_iter().flatten().collect();
    fuse(&all, SliceGranularity::Week)
        .expect("fixture fuses")
        .table
        .with_reference_ranges(&lexicon())
}

pub mod gen {
    use std::collections::BTreeSet;

    use chrono::{Days, NaiveDate};
    use chronofuse::ingest::{Observation, ReportId, TimePoint};
    use chronofuse::store::SliceGranularity;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub const MAX_REPORTS: usize = 10;
    pub const MAX_METRICS: usize = 8;
    pub const MAX_DAYS: u64 = 365;

    pub struct ObservationSet {
        pub observations: Vec<Observation>,
        pub reports: usize,
        /// Largest number of distinct metrics in any one report.
        pub m_max: usize,
        pub granularity: SliceGranularity,
    }

    /// Up to 10 reports over up to 8 metrics (each with a fixed unit) within one year.
    pub fn observation_set(rng: &mut ChaCha8Rng) -> ObservationSet {
        let reports = rng.gen_range(1..=MAX_REPORTS);
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let mut observations = Vec::new();
        let mut m_max = 0;
        for r in 0..reports {
            let metric_count = rng.gen_range(1..=MAX_METRICS);
            let mut pool: Vec<usize> = (0..MAX_METRICS).collect();
            pool.shuffle(rng);
            let metrics = &pool[..metric_count];
            let mut used = BTreeSet::new();
            for _ in 0..rng.gen_range(0..30) {
                let m = metrics[rng.gen_range(0..metrics.len())];
                used.insert(m);
                let date = start + Days::new(rng.gen_range(0..MAX_DAYS));
                let time = if rng.gen_bool(0.3) {
                    TimePoint::at(date, rng.gen_range(0..24), rng.gen_range(0..60)).unwrap()
                } else {
                    TimePoint::day(date)
                };
                observations.push(Observation {
                    metric: format!("M{m}"),
                    value: (rng.gen_range(-50_000..250_000) as f64) / 100.0,
                    unit: format!("u{m}"),
                    time,
                    source: ReportId::new(format!("report-{r:02}")),
                    flags: BTreeSet::new(),
                });
            }
            m_max = m_max.max(used.len());
        }
        let granularity = [SliceGranularity::Day, SliceGranularity::Week, SliceGranularity::Month][rng.gen_range(0..3)];
        ObservationSet {
            observations,
            reports,
            m_max,
            granularity,
        }
    }

    /// Strictly increasing times with finite values.
    pub fn series(rng: &mut ChaCha8Rng, len: usize) -> Vec<(f64, f64)> {
        let mut t = rng.gen_range(-10.0..10.0);
        (0..len)
            .map(|_| {
                t += rng.gen_range(0.01..5.0);
                (t, rng.gen_range(-1000.0..1000.0))
            })
            .collect()
    }
}
