use std::path::Path;

use proptest::prelude::*;

use nstar::sweep::{
    aggregate, enumerate_configs, load_runs, run_sweep, Metric, RunStatus, SweepGrid, SweepManifest, SweepMode,
    SweepOptions, MANIFEST_FILE, RUNLOG_FILE,
};
use nstar::{generate_population, Population, PopulationConfig, Recipe};

fn pop() -> Population {
    generate_population(&PopulationConfig {
        train_size: 120,
        val_size: 30,
        ..PopulationConfig::easy(21)
    })
    .unwrap()
}

fn grid() -> SweepGrid {
    SweepGrid {
        batch_problem_values: vec![4, 8],
        n_values: vec![2, 8],
        total_compute: 2048,
        base_seed: 3,
        ..SweepGrid::default()
    }
}

fn opts(resume: bool) -> SweepOptions {
    SweepOptions { workers: 2, resume }
}

fn runlog(dir: &Path, run_id: &str) -> Vec<u8> {
    std::fs::read(dir.join(run_id).join(RUNLOG_FILE)).unwrap()
}

#[test]
fn completed_sweep_has_one_log_per_entry_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid();
    let done = run_sweep(dir.path(), enumerate_configs(&g).unwrap(), &pop(), &Recipe::easy(), &opts(false)).unwrap();
    assert_eq!(done.count(RunStatus::Completed), done.entries.len());
    assert_eq!(SweepManifest::load(dir.path().join(MANIFEST_FILE)).unwrap(), done);
    let runs = load_runs(dir.path()).unwrap();
    assert_eq!(runs.len(), done.entries.len());
    for e in &done.entries {
        let rows = &runs[&(e.batch_problems, e.n)][0];
        assert_eq!(rows.len(), e.steps + 1);
        assert!(rows.last().unwrap().compute <= g.total_compute);
        assert!(rows.iter().all(|r| r.run_id == e.run_id));
    }
    let curves = aggregate(dir.path(), Metric::Avg).unwrap();
    assert_eq!(curves[&(8, 8)].len(), 2048 / 64 + 1);
}

#[test]
fn rerun_requires_resume_and_recomputes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (p, recipe) = (pop(), Recipe::easy());
    run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &p, &recipe, &opts(false)).unwrap();
    let before = runlog(dir.path(), "bp4_n2_r0");

    let err = run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &p, &recipe, &opts(false)).unwrap_err();
    assert!(err.is_validation());

    // A completed log that is overwritten with junk must survive a resume untouched.
    std::fs::write(dir.path().join("bp8_n8_r0").join(RUNLOG_FILE), b"sentinel").unwrap();
    let again = run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &p, &recipe, &opts(true)).unwrap();
    assert_eq!(again.count(RunStatus::Completed), again.entries.len());
    assert_eq!(runlog(dir.path(), "bp8_n8_r0"), b"sentinel");
    assert_eq!(runlog(dir.path(), "bp4_n2_r0"), before);

    let other = SweepGrid { base_seed: 4, ..grid() };
    assert!(run_sweep(dir.path(), enumerate_configs(&other).unwrap(), &p, &recipe, &opts(true)).is_err());
}

#[test]
fn resume_fills_in_missing_runs_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (p, recipe) = (pop(), Recipe::easy());
    run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &p, &recipe, &opts(false)).unwrap();
    let original = runlog(dir.path(), "bp4_n8_r0");
    std::fs::remove_dir_all(dir.path().join("bp4_n8_r0")).unwrap();
    let done = run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &p, &recipe, &opts(true)).unwrap();
    assert_eq!(done.count(RunStatus::Completed), 4);
    assert_eq!(runlog(dir.path(), "bp4_n8_r0"), original);
}

#[test]
fn replicates_get_distinct_seeds_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let g = SweepGrid {
        batch_problem_values: vec![4],
        n_values: vec![4],
        replicates: 2,
        ..grid()
    };
    let done = run_sweep(dir.path(), enumerate_configs(&g).unwrap(), &pop(), &Recipe::easy(), &opts(false)).unwrap();
    assert_ne!(done.entries[0].seed, done.entries[1].seed);
    assert_ne!(runlog(dir.path(), "bp4_n4_r0"), runlog(dir.path(), "bp4_n4_r1"));
    assert_eq!(load_runs(dir.path()).unwrap()[&(4, 4)].len(), 2);
}

#[test]
fn failing_runs_are_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    // n_est below n is only rejected per run, so the n = 8 cells fail.
    let recipe = Recipe {
        n_est: Some(4),
        ..Recipe::easy()
    };
    let done = run_sweep(dir.path(), enumerate_configs(&grid()).unwrap(), &pop(), &recipe, &opts(false)).unwrap();
    for e in &done.entries {
        if e.n == 8 {
            assert_eq!(e.status, RunStatus::Failed);
            assert!(e.error.as_deref().unwrap().contains("n_est"));
        } else {
            assert_eq!(e.status, RunStatus::Completed);
        }
    }
    assert_eq!(load_runs(dir.path()).unwrap().len(), 2);
}

#[test]
fn missing_run_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_runs(dir.path()).unwrap_err().is_validation());
}

proptest! {
    #[test]
    fn enumerated_configs_respect_every_constraint(
        bp_exp in proptest::collection::btree_set(0u32..11, 1..6),
        n_exp in proptest::collection::btree_set(0u32..12, 1..6),
        cap_exp in 4u32..17,
        budget in 1u64..(1 << 22),
        fixed_exp in proptest::option::of(0u32..17),
        mode in prop_oneof![Just(SweepMode::FixBp), Just(SweepMode::FixB), Just(SweepMode::Joint)],
    ) {
        let g = SweepGrid {
            batch_problem_values: bp_exp.iter().map(|e| 1usize << e).collect(),
            n_values: n_exp.iter().map(|e| 1usize << e).collect(),
            max_batch: 1 << cap_exp,
            total_compute: budget,
            mode,
            fixed_batch: fixed_exp.map(|e| 1usize << e),
            ..SweepGrid::default()
        };
        match enumerate_configs(&g) {
            Ok(m) => {
                for e in &m.entries {
                    let b = e.batch_problems * e.n;
                    prop_assert!(b <= g.max_batch);
                    prop_assert!(e.steps >= 1 && (b * e.steps) as u64 <= budget);
                    prop_assert!((b * (e.steps + 1)) as u64 > budget);
                    if mode == SweepMode::FixB {
                        prop_assert_eq!(Some(b), g.fixed_batch);
                    }
                }
                let mut ids: Vec<&str> = m.entries.iter().map(|e| e.run_id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                prop_assert_eq!(ids.len(), m.entries.len());
                for s in &m.skipped {
                    prop_assert!((s.batch_problems * s.n) as u64 > budget);
                }
            }
            Err(e) => prop_assert!(e.is_validation()),
        }
    }
}
