//! Structural properties of workflows and the workload generator.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use wfsim::workflow::{
    generate_montage, load_workflow, MontageParams, MCONCATFIT, MIMGTBL,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn montage_structure_holds_for_any_n(n in 4u64..200, seed in 0u64..1000) {
        let dag = generate_montage(&MontageParams::new(n, seed)).unwrap();
        prop_assert_eq!(dag.len() as u64, 5 * n);
        let concat = dag.task_idx(MCONCATFIT).unwrap();
        prop_assert_eq!(dag.parent_idxs(concat).len() as u64, 3 * n - 6);
        let imgtbl = dag.task_idx(MIMGTBL).unwrap();
        prop_assert_eq!(dag.parent_idxs(imgtbl).len() as u64, n);
        // Acyclicity is checked at construction; reaching here proves it.
    }

    #[test]
    fn load_after_serialize_is_identity(seed in 0u64..500) {
        let dag = common::random_dag(seed, 60);
        let json = dag.to_json();
        let re = load_workflow(json.as_bytes()).unwrap();
        prop_assert_eq!(re.tasks(), dag.tasks());
        prop_assert_eq!(re.to_json(), json);
    }

    #[test]
    fn ready_tasks_is_monotone_on_random_dags(seed in 0u64..200) {
        // Completing tasks in topological (file-compatible) order: a task
        // that was ready never becomes unready, except by completing.
        let dag = common::random_dag(seed, 40);
        let mut completed: HashSet<String> = HashSet::new();
        let mut previously_ready: HashSet<String> = HashSet::new();
        for t in dag.tasks() {
            let ready: HashSet<String> = dag
                .ready_tasks(&completed)
                .unwrap()
                .iter()
                .map(|s| s.to_string())
                .collect();
            for p in &previously_ready {
                prop_assert!(
                    ready.contains(p) || completed.contains(p),
                    "{p} lost readiness without completing"
                );
            }
            previously_ready = ready;
            completed.insert(t.id.clone());
        }
        prop_assert!(dag.ready_tasks(&completed).unwrap().is_empty());
    }
}
