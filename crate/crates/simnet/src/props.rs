//! Property checks over a finished run.

use std::collections::{BTreeMap, BTreeSet};

use anonbft::crypto::Digest;
use anonbft::Evidence;

use crate::config::{Behavior, Protocol};
use crate::sim::{vector_validity, RunOutput};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub pass: bool,
    /// Step at which the violation became visible.
    pub counterexample: Option<u64>,
    pub detail: String,
}

impl PropertyResult {
    fn ok(name: &'static str) -> Self {
        PropertyResult {
            name,
            pass: true,
            counterexample: None,
            detail: String::new(),
        }
    }

    fn fail(name: &'static str, step: Option<u64>, detail: String) -> Self {
        PropertyResult {
            name,
            pass: false,
            counterexample: step,
            detail,
        }
    }

    fn check(name: &'static str, violation: Option<(Option<u64>, String)>) -> Self {
        match violation {
            None => Self::ok(name),
            Some((step, detail)) => Self::fail(name, step, detail),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PropertyReport {
    pub results: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.results.iter().filter(|r| !r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Checks every property relevant to the run's protocol.
pub fn assert_properties(run: &RunOutput) -> PropertyReport {
    let mut results = vec![termination(run)];
    match run.config.protocol {
        Protocol::Broadcast => {
            results.push(arb_integrity(run));
            results.push(arb_unicity(run));
            results.push(arb_agreement(run));
            results.push(arb_validity(run));
            results.push(double_sign_evidence(run));
        }
        Protocol::Binary => {
            results.push(bbc_agreement(run));
            results.push(bbc_validity(run));
        }
        Protocol::Vector => {
            results.push(avc_agreement(run));
            results.push(avc_validity(run));
            results.push(avc_size(run));
            results.push(double_sign_evidence(run));
        }
        Protocol::Election => {
            results.push(election_agreement(run));
            results.push(election_honest_ballots(run));
            results.push(election_no_duplicates(run));
        }
    }
    PropertyReport { results }
}

fn termination(run: &RunOutput) -> PropertyResult {
    let protocol = run.config.protocol;
    let missing: Vec<usize> = run
        .honest()
        .filter(|p| match protocol {
            Protocol::Broadcast => {
                p.delivered.is_empty() && run.honest().any(|q| !q.proposed.is_empty())
            }
            _ => p.finish_step(protocol).is_none(),
        })
        .map(|p| p.id)
        .collect();
    if !missing.is_empty() || run.exhausted {
        return PropertyResult::fail(
            "termination",
            Some(if run.exhausted {
                run.budget
            } else {
                run.metrics.end_step
            }),
            format!(
                "no output at {missing:?}, budget exhausted: {}",
                run.exhausted
            ),
        );
    }
    PropertyResult::ok("termination")
}

fn arb_integrity(run: &RunOutput) -> PropertyResult {
    let v = run.honest().find_map(|p| {
        let mut seen = BTreeSet::new();
        p.delivered.iter().find_map(|(step, payload)| {
            if !seen.insert(payload.digest()) {
                return Some((
                    Some(*step),
                    format!("process {} delivered a digest twice", p.id),
                ));
            }
            run.oracle.signer(payload).is_none().then(|| {
                (
                    Some(*step),
                    format!("process {} delivered an unsigned payload", p.id),
                )
            })
        })
    });
    PropertyResult::check("arb_integrity", v)
}

fn arb_unicity(run: &RunOutput) -> PropertyResult {
    let v = run.honest().find_map(|p| {
        let mut signers = BTreeSet::new();
        p.delivered.iter().find_map(|(step, payload)| {
            let signer = run.oracle.signer(payload)?;
            (!signers.insert(signer)).then(|| {
                (
                    Some(*step),
                    format!("process {} delivered two payloads from {signer}", p.id),
                )
            })
        })
    });
    PropertyResult::check("arb_unicity", v)
}

fn arb_agreement(run: &RunOutput) -> PropertyResult {
    let sets: Vec<(usize, BTreeMap<Digest, u64>)> = run
        .honest()
        .map(|p| {
            (
                p.id,
                p.delivered.iter().map(|(s, d)| (d.digest(), *s)).collect(),
            )
        })
        .collect();
    let v = sets.iter().find_map(|(a, da)| {
        sets.iter().find_map(|(b, db)| {
            da.iter().find(|(d, _)| !db.contains_key(*d)).map(|(_, s)| {
                (
                    Some(*s),
                    format!("process {a} delivered a payload process {b} never did"),
                )
            })
        })
    });
    PropertyResult::check("arb_agreement", v)
}

fn arb_validity(run: &RunOutput) -> PropertyResult {
    let v = run.honest().find_map(|proposer| {
        proposer.proposed.iter().find_map(|d| {
            run.honest()
                .find(|p| !p.delivered.iter().any(|(_, x)| x.digest() == *d))
                .map(|p| {
                    (
                        Some(run.metrics.end_step),
                        format!("process {} missed honest proposal of {}", p.id, proposer.id),
                    )
                })
        })
    });
    PropertyResult::check("arb_validity", v)
}

fn double_sign_evidence(run: &RunOutput) -> PropertyResult {
    let signers: Vec<usize> = run
        .processes
        .iter()
        .filter(|p| p.behavior == Some(Behavior::DoubleSign))
        .map(|p| p.id)
        .collect();
    if signers.is_empty() {
        return PropertyResult::ok("double_sign_evidence");
    }
    let found = run.honest().any(|p| {
        p.evidence
            .iter()
            .any(|(_, e)| matches!(e, Evidence::DoubleSign { .. }))
    });
    if found {
        PropertyResult::ok("double_sign_evidence")
    } else {
        PropertyResult::fail(
            "double_sign_evidence",
            Some(run.metrics.end_step),
            format!("no honest process reported {signers:?}"),
        )
    }
}

fn bbc_agreement(run: &RunOutput) -> PropertyResult {
    let decided: Vec<(usize, bool, u64)> = run
        .honest()
        .filter_map(|p| p.bin_decision.map(|(v, _, s)| (p.id, v, s)))
        .collect();
    let v = decided.first().and_then(|&(a, va, _)| {
        decided.iter().find(|(_, v, _)| *v != va).map(|&(b, _, s)| {
            (
                Some(s),
                format!("processes {a} and {b} decided differently"),
            )
        })
    });
    PropertyResult::check("bbc_agreement", v)
}

fn bbc_validity(run: &RunOutput) -> PropertyResult {
    let proposed: BTreeSet<bool> = run.honest().filter_map(|p| p.bin_proposal).collect();
    let v = run.honest().find_map(|p| {
        let (value, _, step) = p.bin_decision?;
        (!proposed.contains(&value)).then(|| {
            (
                Some(step),
                format!(
                    "process {} decided {value}, proposed by no honest process",
                    p.id
                ),
            )
        })
    });
    PropertyResult::check("bbc_validity", v)
}

fn avc_agreement(run: &RunOutput) -> PropertyResult {
    let vectors: Vec<(usize, u64, Vec<Digest>)> = run
        .honest()
        .filter_map(|p| {
            p.vector
                .as_ref()
                .map(|(s, v)| (p.id, *s, v.iter().map(|x| x.digest()).collect()))
        })
        .collect();
    let v = vectors.first().and_then(|(a, _, va)| {
        vectors.iter().find(|(_, _, v)| v != va).map(|(b, s, _)| {
            (
                Some(*s),
                format!("processes {a} and {b} decided different vectors"),
            )
        })
    });
    PropertyResult::check("avc_agreement", v)
}

fn avc_validity(run: &RunOutput) -> PropertyResult {
    let valid = vector_validity();
    let v = run.honest().find_map(|p| {
        let (step, vector) = p.vector.as_ref()?;
        let mut signers = BTreeSet::new();
        let faulty_signed = vector
            .iter()
            .filter(|x| {
                run.oracle
                    .signer(x)
                    .is_some_and(|s| !run.config.is_honest(s))
            })
            .count();
        if faulty_signed > run.config.t {
            return Some((
                Some(*step),
                format!("process {} decided {faulty_signed} faulty proposals", p.id),
            ));
        }
        vector.iter().find_map(|x| {
            if !valid(x) {
                return Some((
                    Some(*step),
                    format!("process {} decided an invalid payload", p.id),
                ));
            }
            match run.oracle.signer(x) {
                Some(s) if signers.insert(s) => None,
                Some(s) => Some((
                    Some(*step),
                    format!("process {} decided two payloads from {s}", p.id),
                )),
                None => Some((
                    Some(*step),
                    format!("process {} decided an unsigned payload", p.id),
                )),
            }
        })
    });
    PropertyResult::check("avc_validity", v)
}

fn avc_size(run: &RunOutput) -> PropertyResult {
    let min = run.config.n - run.config.t;
    let v = run.honest().find_map(|p| {
        let (step, vector) = p.vector.as_ref()?;
        (vector.len() < min).then(|| {
            (
                Some(*step),
                format!(
                    "process {} decided {} < {min} proposals",
                    p.id,
                    vector.len()
                ),
            )
        })
    });
    PropertyResult::check("avc_size", v)
}

fn election_agreement(run: &RunOutput) -> PropertyResult {
    let outs: Vec<(usize, u64, &Vec<Vec<u8>>)> = run
        .honest()
        .filter_map(|p| p.ballots.as_ref().map(|(s, b)| (p.id, *s, b.as_ref())))
        .collect();
    let v = outs.first().and_then(|(a, _, ba)| {
        outs.iter().find(|(_, _, b)| b != ba).map(|(b, s, _)| {
            (
                Some(*s),
                format!("processes {a} and {b} output different ballots"),
            )
        })
    });
    PropertyResult::check("election_agreement", v)
}

fn election_honest_ballots(run: &RunOutput) -> PropertyResult {
    let honest: BTreeSet<&[u8]> = run
        .honest()
        .filter_map(|p| p.ballot_content.as_deref())
        .collect();
    let min = run.config.n - 2 * run.config.t;
    let v = run.honest().find_map(|p| {
        let (step, ballots) = p.ballots.as_ref()?;
        let count = ballots
            .iter()
            .filter(|b| honest.contains(b.as_slice()))
            .count();
        (count < min).then(|| {
            (
                Some(*step),
                format!("process {} output {count} < {min} honest ballots", p.id),
            )
        })
    });
    PropertyResult::check("election_honest_ballots", v)
}

fn election_no_duplicates(run: &RunOutput) -> PropertyResult {
    let v = run.honest().find_map(|p| {
        let (step, ballots) = p.ballots.as_ref()?;
        let mut seen = BTreeSet::new();
        ballots
            .iter()
            .find(|b| !seen.insert(b.as_slice()))
            .map(|_| {
                (
                    Some(*step),
                    format!("process {} output a ballot twice", p.id),
                )
            })
    });
    PropertyResult::check("election_no_duplicates", v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::sim::run;
    use std::sync::Arc;

    #[test]
    fn tampered_runs_fail() {
        let cfg = SimConfig::new(Protocol::Broadcast, 4, 1, 5);
        let mut out = run(&cfg).unwrap();
        assert!(assert_properties(&out).all_passed());
        out.processes[1].delivered.pop();
        let report = assert_properties(&out);
        assert!(!report.get("arb_agreement").unwrap().pass);
        assert!(!report.get("arb_validity").unwrap().pass);
        let dup = out.processes[0].delivered[0].clone();
        out.processes[0].delivered.push(dup);
        assert!(!assert_properties(&out).get("arb_integrity").unwrap().pass);
    }

    #[test]
    fn tampered_vector_fails() {
        let cfg = SimConfig::new(Protocol::Vector, 4, 1, 2);
        let mut out = run(&cfg).unwrap();
        assert!(
            assert_properties(&out).all_passed(),
            "{:?}",
            assert_properties(&out)
        );
        let (step, v) = out.processes[2].vector.clone().unwrap();
        let shorter: Vec<_> = v[1..].to_vec();
        out.processes[2].vector = Some((step, Arc::new(shorter)));
        let report = assert_properties(&out);
        let agreement = report.get("avc_agreement").unwrap();
        assert!(!agreement.pass);
        assert!(agreement.counterexample.is_some());
    }

    #[test]
    fn tampered_binary_fails() {
        let cfg = SimConfig::new(Protocol::Binary, 4, 1, 1);
        let mut out = run(&cfg).unwrap();
        assert!(assert_properties(&out).all_passed());
        let (v, r, s) = out.processes[0].bin_decision.unwrap();
        out.processes[0].bin_decision = Some((!v, r, s));
        let report = assert_properties(&out);
        assert!(!report.get("bbc_agreement").unwrap().pass);
        assert!(!report.get("bbc_validity").unwrap().pass);
        out.processes[0].bin_decision = None;
        assert!(!assert_properties(&out).get("termination").unwrap().pass);
    }
}
