use std::collections::HashMap;

use areal_sir::data::{
    asymptomatic_lambda, changepoint_index, ingest_cases, read_cases_csv, read_mobility_csv, read_population_csv,
    susceptible_trajectory, three_day_average, write_cases_csv, write_mobility_csv, write_population_csv,
    CaseSeriesPanel, CumulativeRecord,
};
use areal_sir::Error;
use chrono::NaiveDate;
use proptest::prelude::*;

fn day(d: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 6).unwrap() + chrono::Duration::days(d)
}

fn records(fips: &str, cumulative: &[(i64, u64)]) -> Vec<CumulativeRecord> {
    cumulative
        .iter()
        .map(|&(d, c)| CumulativeRecord { date: day(d), fips: fips.into(), cases: c, deaths: 0 })
        .collect()
}

fn one_area(cumulative: &[(i64, u64)], days: i64) -> CaseSeriesPanel {
    ingest_cases(&records("45001", cumulative), &["45001".into()], day(0), day(days - 1), &[1000]).unwrap()
}

fn panel(rows: Vec<Vec<u64>>, deaths: Vec<Vec<u64>>, population: Vec<u64>) -> CaseSeriesPanel {
    let n_days = rows[0].len();
    CaseSeriesPanel {
        area_ids: (0..rows.len()).map(|i| format!("{:05}", 45001 + 2 * i)).collect(),
        dates: (0..n_days as i64).map(day).collect(),
        cases: rows,
        deaths,
        population,
        clamped: 0,
    }
}

#[test]
fn ingest_examples() {
    assert_eq!(one_area(&[(0, 0), (1, 3), (2, 3), (3, 10)], 4).cases[0], vec![0, 3, 0, 7]);
    let corrected = one_area(&[(0, 5), (1, 4)], 2);
    assert_eq!((corrected.cases[0].clone(), corrected.clamped), (vec![5, 0], 1));
    assert_eq!(one_area(&[(0, 2), (2, 6)], 3).cases[0], vec![2, 0, 4]);
}

#[test]
fn ingest_errors() {
    let ids = vec!["45001".to_string()];
    assert!(matches!(ingest_cases(&[], &ids, day(3), day(1), &[10]), Err(Error::EmptyDateRange)));
    let mut rows = records("45001", &[(0, 1), (2, 3)]);
    rows.push(CumulativeRecord { date: day(1), fips: "45001".into(), cases: 2, deaths: 0 });
    assert!(matches!(ingest_cases(&rows, &ids, day(0), day(2), &[10]), Err(Error::NonMonotoneDates { .. })));
    let other = records("45003", &[(0, 1)]);
    assert!(matches!(ingest_cases(&other, &ids, day(0), day(0), &[10]), Err(Error::UnknownAreaId(_))));
}

#[test]
fn baseline_is_the_day_before_the_range() {
    let rows = records("45001", &[(-2, 40), (-1, 50), (0, 55), (1, 61)]);
    let p = ingest_cases(&rows, &["45001".into()], day(0), day(1), &[1000]).unwrap();
    assert_eq!(p.cases[0], vec![5, 6]);
}

proptest! {
    #[test]
    fn reaccumulation_recovers_cumulative(steps in prop::collection::vec(0u64..500, 1..60), skip in prop::collection::vec(any::<bool>(), 60)) {
        let mut total = 0;
        let mut cumulative = Vec::new();
        for (d, s) in steps.iter().enumerate() {
            total += s;
            // Drop some interior reports; the forward fill must still recover the totals.
            if d == 0 || d + 1 == steps.len() || !skip[d] {
                cumulative.push((d as i64, total));
            }
        }
        let p = one_area(&cumulative, steps.len() as i64);
        prop_assert_eq!(p.clamped, 0);
        let mut acc = 0;
        let mut reported = cumulative.iter().peekable();
        for (d, y) in p.cases[0].iter().enumerate() {
            acc += y;
            if let Some(&&(rd, c)) = reported.peek() {
                if rd == d as i64 {
                    prop_assert_eq!(acc, c);
                    reported.next();
                }
            }
        }
        prop_assert_eq!(acc, total);
    }

    #[test]
    fn smoothing_keeps_totals_close(rows in prop::collection::vec(prop::collection::vec(0u64..1000, 3..80), 1..5)) {
        let len = rows[0].len();
        let rows: Vec<Vec<u64>> = rows.into_iter().map(|mut r| { r.resize(len, 0); r }).collect();
        let n = rows.len();
        let p = panel(rows.clone(), vec![vec![0; len]; n], vec![1; n]);
        let s = three_day_average(&p).unwrap();
        for (raw, smooth) in rows.iter().zip(&s.values) {
            let max = *raw.iter().max().unwrap() as f64;
            let diff = smooth.iter().sum::<f64>() - raw.iter().sum::<u64>() as f64;
            prop_assert!(diff.abs() <= 4.0 * max + 1e-9);
            prop_assert!(smooth.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn susceptibles_fall_and_stay_nonnegative(
        cases in prop::collection::vec(0u64..3000, 2..60),
        deaths in prop::collection::vec(0u64..50, 60),
        pop in 1u64..100_000,
        lambda in 0.0f64..3.0,
    ) {
        let len = cases.len();
        let p = panel(vec![cases.clone()], vec![deaths[..len].to_vec()], vec![pop]);
        let s = &susceptible_trajectory(&p, lambda).unwrap().s[0];
        prop_assert_eq!(s[0], pop as f64);
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
        let plain = susceptible_trajectory(&panel(vec![cases.clone()], vec![vec![0; len]], vec![pop]), 0.0).unwrap();
        let expected = (pop as f64 - cases[..len - 1].iter().sum::<u64>() as f64).max(0.0);
        prop_assert_eq!(plain.s[0][len - 1], expected);
    }

    #[test]
    fn changepoints_are_nondecreasing_and_onto(lengths in prop::collection::vec(1usize..40, 1..8)) {
        let total: usize = lengths.iter().sum();
        let idx = changepoint_index(&lengths, total).unwrap();
        prop_assert_eq!(idx.len(), total);
        prop_assert_eq!(idx[0], 1);
        prop_assert!(idx.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert_eq!(*idx.last().unwrap(), lengths.len());
    }
}

#[test]
fn smoothing_examples() {
    let s = three_day_average(&panel(vec![vec![1, 2, 3, 4], vec![7; 4], vec![0, 0, 6, 0]], vec![vec![0; 4]; 3], vec![1; 3])).unwrap();
    assert_eq!(s.values[0], vec![1.0, 1.5, 2.0, 3.0]);
    assert_eq!(s.values[1], vec![7.0; 4]);
    assert_eq!(&s.values[2][..3], &[0.0, 0.0, 2.0]);
    assert!(matches!(three_day_average(&panel(vec![vec![1, 2]], vec![vec![0; 2]], vec![1])), Err(Error::TooShortSeries(2))));
}

#[test]
fn susceptible_examples() {
    let s = susceptible_trajectory(&panel(vec![vec![100, 0]], vec![vec![5, 0]], vec![100_000]), 0.25).unwrap();
    assert_eq!(s.s[0][1], 99_870.0);
    let flat = susceptible_trajectory(&panel(vec![vec![0; 5]], vec![vec![0; 5]], vec![321]), 0.5).unwrap();
    assert!(flat.s[0].iter().all(|&v| v == 321.0));
    let floored = susceptible_trajectory(&panel(vec![vec![100, 0]], vec![vec![0; 2]], vec![50]), 0.0).unwrap();
    assert_eq!(floored.s[0][1], 0.0);
    assert!(matches!(susceptible_trajectory(&panel(vec![vec![0; 3]], vec![vec![0; 3]], vec![1]), -0.1), Err(Error::NegativeLambda(_))));
}

#[test]
fn asymptomatic_multiplier() {
    assert!((asymptomatic_lambda(20.0).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(asymptomatic_lambda(50.0).unwrap(), 1.0);
    assert_eq!(asymptomatic_lambda(0.0).unwrap(), 0.0);
    assert!((asymptomatic_lambda(75.0).unwrap() - 3.0).abs() < 1e-12);
    assert!(matches!(asymptomatic_lambda(100.0), Err(Error::RateOutOfRange(_))));
}

#[test]
fn changepoint_examples() {
    let sc = changepoint_index(&[18, 20, 13, 250], 301).unwrap();
    for (d, p) in [(1, 1), (18, 1), (19, 2), (39, 3), (52, 4), (301, 4)] {
        assert_eq!(sc[d - 1], p, "day {d}");
    }
    let nj = changepoint_index(&[16, 80, 205], 301).unwrap();
    for (d, p) in [(16, 1), (17, 2), (96, 2), (97, 3)] {
        assert_eq!(nj[d - 1], p, "day {d}");
    }
    assert!(changepoint_index(&[12], 12).unwrap().iter().all(|&p| p == 1));
    assert!(matches!(changepoint_index(&[3, 4], 8), Err(Error::LengthMismatch { .. })));
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = vec!["45001".into(), "45003".into()];
    let p = panel(vec![vec![1, 0, 4, 2], vec![0, 3, 3, 9]], vec![vec![0, 0, 1, 0], vec![0; 4]], vec![900, 1200]);
    let cases = dir.path().join("cases.csv");
    write_cases_csv(&cases, &p.to_cumulative(), &HashMap::new(), "South Carolina").unwrap();
    let header = std::fs::read_to_string(&cases).unwrap();
    assert!(header.starts_with("date,county,state,fips,cases,deaths\n"));
    let back = ingest_cases(&read_cases_csv(&cases).unwrap(), &ids, day(0), day(3), &p.population).unwrap();
    assert_eq!(back, p);

    let pop = dir.path().join("population.csv");
    write_population_csv(&pop, &ids, &p.population).unwrap();
    assert_eq!(read_population_csv(&pop).unwrap(), vec![("45001".to_string(), 900), ("45003".to_string(), 1200)]);

    let mob = dir.path().join("mobility.csv");
    let work = vec![vec![-1.0, -5.0, -7.5, 2.0], vec![0.0, 3.0, -2.0, -4.0]];
    write_mobility_csv(&mob, &ids, &p.dates, &work).unwrap();
    assert_eq!(read_mobility_csv(&mob, &ids, &p.dates).unwrap(), work);
}

#[test]
fn mobility_gaps_are_filled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mobility.csv");
    std::fs::write(&path, "date,fips,work_index\n2020-03-07,45001,-3\n2020-03-09,45001,-8\n2020-03-06,45003,4\n").unwrap();
    let ids: Vec<String> = vec!["45001".into(), "45003".into()];
    let dates: Vec<NaiveDate> = (0..4).map(day).collect();
    let w = read_mobility_csv(&path, &ids, &dates).unwrap();
    assert_eq!(w[0], vec![0.0, -3.0, -3.0, -8.0]);
    assert_eq!(w[1], vec![4.0; 4]);
}
