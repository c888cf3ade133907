use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use pinchflow_core::format::fmt17;

use crate::run::CliError;

type Key = (String, u64, u64);

#[derive(Default)]
struct Tables {
    checks: BTreeMap<Key, Value>,
    searches: BTreeMap<Key, Value>,
    identities: BTreeMap<(u64, u64), Value>,
    flows: BTreeMap<String, Value>,
    planarity: BTreeMap<String, Value>,
}

fn num(v: &Value, k: &str) -> String {
    match v.get(k) {
        Some(Value::Number(x)) if x.is_f64() => fmt17(x.as_f64().unwrap_or(f64::NAN)),
        Some(Value::Number(x)) => x.to_string(),
        Some(Value::Bool(b)) => (if *b { "yes" } else { "no" }).to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => "-".to_string(),
        Some(other) => other.to_string(),
    }
}

fn uint(v: &Value, k: &str) -> u64 {
    v.get(k).and_then(Value::as_u64).unwrap_or(0)
}

fn verdict(v: &Value) -> &'static str {
    if v.get("passed").and_then(Value::as_bool).unwrap_or(false) {
        "pass"
    } else {
        "FAIL"
    }
}

fn insert<K: Ord + std::fmt::Debug>(map: &mut BTreeMap<K, Value>, key: K, v: Value, file: &Path) {
    if map.contains_key(&key) {
        eprintln!("warning: {} overrides an earlier entry for {key:?}", file.display());
    }
    map.insert(key, v);
}

impl Tables {
    fn absorb(&mut self, path: &Path, doc: Value) -> Result<(), CliError> {
        let kind = doc.get("kind").and_then(Value::as_str).unwrap_or("").to_string();
        let label = path.with_extension("").display().to_string();
        match kind.as_str() {
            "inequality-batch" => {
                for c in doc.get("checks").and_then(Value::as_array).cloned().unwrap_or_default() {
                    let name = format!("{}/{}", num(&c, "lemma"), num(&c, "branch"));
                    insert(&mut self.checks, (name, uint(&c, "n"), uint(&c, "m")), c, path);
                }
            }
            "violation-search" => {
                let key = (num(&doc, "lemma"), uint(&doc, "n"), uint(&doc, "m"));
                insert(&mut self.searches, key, doc, path);
            }
            "identity-suite" => {
                for r in doc.get("rows").and_then(Value::as_array).cloned().unwrap_or_default() {
                    let mut r = r;
                    if let Value::Object(o) = &mut r {
                        o.insert("tolerance".into(), doc.get("tolerance").cloned().unwrap_or(Value::Null));
                    }
                    insert(&mut self.identities, (uint(&r, "n"), uint(&r, "m")), r, path);
                }
            }
            "grid-flow" | "product-flow" => insert(&mut self.flows, format!("{kind}:{label}"), doc, path),
            "planarity" => insert(&mut self.planarity, label, doc, path),
            "" => eprintln!("warning: {} is not a summary file, skipped", path.display()),
            other => {
                return Err(CliError::Parse(format!("{}: unrecognised summary kind `{other}`", path.display())));
            }
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.checks.is_empty()
            && self.searches.is_empty()
            && self.identities.is_empty()
            && self.flows.is_empty()
            && self.planarity.is_empty()
    }

    fn render(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let mut s = String::from("# pinchflow report\n");
        if !self.checks.is_empty() {
            s += "\n## Inequality checks\n\n| checker | n | m | c0 | delta | min slack | samples | violations | result |\n|---|---|---|---|---|---|---|---|---|\n";
            for ((name, n, m), c) in &self.checks {
                let pass = if c.get("passed").and_then(Value::as_bool).unwrap_or(false) { "pass" } else { "FAIL" };
                let _ = writeln!(
                    s,
                    "| {name} | {n} | {m} | {} | {} | {} | {} | {} | {pass} |",
                    num(c, "c0"),
                    num(c, "delta"),
                    num(c, "min_slack"),
                    num(c, "count"),
                    num(c, "violations")
                );
            }
        }
        if !self.searches.is_empty() {
            s += "\n## Violation searches\n\n| checker | n | m | worst branch | normalized slack | evaluations | result |\n|---|---|---|---|---|---|---|\n";
            for ((name, n, m), d) in &self.searches {
                let _ = writeln!(
                    s,
                    "| {name} | {n} | {m} | {} | {} | {} | {} |",
                    num(d, "worst_branch"),
                    num(d, "normalized_slack"),
                    num(d, "evaluations"),
                    verdict(d)
                );
            }
        }
        if !self.identities.is_empty() {
            s += "\n## Algebraic identities\n\n| n | m | instances | reconstruction | reaction | pinching | derivative split | traced Codazzi | Q routes | trace tensors | result |\n|---|---|---|---|---|---|---|---|---|---|---|\n";
            for ((n, m), r) in &self.identities {
                let worst = [
                    "reconstruction",
                    "reaction",
                    "pinching",
                    "derivative_split",
                    "traced_codazzi",
                    "q_equivalence",
                    "trace_tensors",
                ]
                .iter()
                .filter_map(|k| r.get(*k).and_then(Value::as_f64))
                .fold(0.0, f64::max);
                let tol = r.get("tolerance").and_then(Value::as_f64).unwrap_or(1e-12);
                let _ = writeln!(
                    s,
                    "| {n} | {m} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    num(r, "count"),
                    num(r, "reconstruction"),
                    num(r, "reaction"),
                    num(r, "pinching"),
                    num(r, "derivative_split"),
                    num(r, "traced_codazzi"),
                    num(r, "q_equivalence"),
                    num(r, "trace_tensors"),
                    if worst <= tol { "pass" } else { "FAIL" }
                );
            }
        }
        if !self.flows.is_empty() {
            s += "\n## Flows\n\n| run | kind | stop | f increasing | ratio f nonincreasing | ratio H bounded | hatA/H growth | outside hypothesis | result |\n|---|---|---|---|---|---|---|---|---|\n";
            for (key, d) in &self.flows {
                let (kind, label) = key.split_once(':').unwrap_or(("", key));
                let _ = writeln!(
                    s,
                    "| {label} | {kind} | {} | {} | {} | {} | {} | {} | {} |",
                    num(d, "stop_reason"),
                    num(d, "f_increasing"),
                    num(d, "ratio_f_nonincreasing"),
                    num(d, "ratio_h_bounded"),
                    num(d, "hat_over_h2s_growth"),
                    num(d, "outside_theorem_hypothesis"),
                    verdict(d)
                );
            }
        }
        if !self.planarity.is_empty() {
            s += "\n## Planarity\n\n| run | expect | max hatA ratio | affine residual | codimension | result |\n|---|---|---|---|---|---|\n";
            for (label, d) in &self.planarity {
                let _ = writeln!(
                    s,
                    "| {label} | {} | {} | {} | {} | {} |",
                    num(d, "expect"),
                    num(d, "max_hat_ratio"),
                    num(d, "affine_residual"),
                    num(d, "estimated_codim"),
                    verdict(d)
                );
            }
        }
        s
    }
}

/// Merge summary files into markdown tables; later files win on key collisions.
pub fn build_report<P: AsRef<Path>>(paths: &[P]) -> Result<String, CliError> {
    let mut tables = Tables::default();
    for p in paths {
        let p = p.as_ref();
        let text = fs::read_to_string(p).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Parse(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column()))
        })?;
        tables.absorb(p, doc)?;
    }
    Ok(tables.render())
}
