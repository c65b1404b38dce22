use recurtc::lower::lower;
use recurtc::models::{bundled, names};
use recurtc::pipeline::schedule_combinations;
use recurtc::ra::{load_model, model_to_json};
use recurtc::RaSchedule;

#[test]
fn transformed_graphs_reload_to_the_same_dump() {
    for m in names() {
        let (g, base) = bundled(m, &[]).unwrap();
        for (label, s) in schedule_combinations(&g, &base) {
            let l = lower(&g, &s).unwrap();
            let text = model_to_json(&l.graph, &RaSchedule::default());
            let (h, _) = load_model(&text, &Default::default()).unwrap_or_else(|e| panic!("{m} {label}: {e}"));
            assert_eq!(model_to_json(&h, &RaSchedule::default()), text, "{m} {label}");
            assert_eq!(h.transformed, s.refactors(), "{m} {label}");
        }
    }
}

#[test]
fn plain_models_reload_equal() {
    for m in names() {
        let (g, s) = bundled(m, &[]).unwrap();
        let (h, t) = load_model(&model_to_json(&g, &s), &Default::default()).unwrap();
        assert_eq!((h, t), (g, s), "{m}");
    }
}
