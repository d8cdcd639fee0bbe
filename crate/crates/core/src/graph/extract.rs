use super::{segment, Entity, EntityGraph, EntityLabel, GraphError, Lexicon, Relation, RelationLabel, TermClass, Unit};

/// How many units after a modifier an observation may start and still be
/// modified by it. A unit is a matched lexicon phrase or a lone word.
const MODIFIER_WINDOW: usize = 3;

const CLAUSE_DELIMITERS: &[char] = &[',', ';', ':', '.', '!', '?'];

/// Rule-based entity and relation extraction from one sentence.
///
/// - Lexicon terms are matched longest-first; a term never spans a clause
///   delimiter (comma, semicolon or sentence punctuation).
/// - Observation and modifier entities are `OBS-DA` when the closest cue
///   before them in the same clause is a negation cue, `OBS-U` when it is an
///   uncertainty cue, `OBS-DP` otherwise. Anatomy is always `ANAT-DP`.
/// - A modifier modifies the first observation starting within the next
///   [`MODIFIER_WINDOW`] units of the same clause.
/// - Each anatomy term is the `located_at` target of the nearest
///   observation in the sentence; on a tie the following one wins.
pub fn extract_graph(sentence: &str, lex: &Lexicon) -> Result<EntityGraph, GraphError> {
    let (words, breaks) = tokenize(sentence, lex);
    if words.is_empty() {
        return Err(GraphError::EmptySentence);
    }
    let mut clause_of = Vec::with_capacity(words.len());
    let mut clause = 0;
    for brk in &breaks {
        clause_of.push(clause);
        if *brk {
            clause += 1;
        }
    }

    let units = segment(&words, &breaks, lex);
    let mut entities = Vec::new();
    // Parallel to `units`: the entity created for that unit, if any.
    let mut entity_of_unit: Vec<Option<usize>> = Vec::with_capacity(units.len());
    for (u, unit) in units.iter().enumerate() {
        let label = match unit.class {
            Some(TermClass::Observation | TermClass::Modifier) => {
                certainty(&units, u, &clause_of)
            }
            Some(TermClass::Anatomy) => EntityLabel::AnatPresent,
            _ => {
                entity_of_unit.push(None);
                continue;
            }
        };
        entity_of_unit.push(Some(entities.len()));
        entities.push(Entity {
            tokens: words[unit.start..=unit.end].join(" "),
            label,
            start_ix: unit.start,
            end_ix: unit.end,
        });
    }

    let is_obs = |u: usize| units[u].class == Some(TermClass::Observation);
    let mut relations = Vec::new();
    for (u, unit) in units.iter().enumerate() {
        match unit.class {
            Some(TermClass::Modifier) => {
                let target = (u + 1..units.len().min(u + 1 + MODIFIER_WINDOW))
                    .take_while(|&v| clause_of[units[v].start] == clause_of[unit.end])
                    .find(|&v| is_obs(v));
                if let (Some(head), Some(tail)) = (entity_of_unit[u], target.and_then(|v| entity_of_unit[v])) {
                    relations.push(Relation { head, tail, label: RelationLabel::Modify });
                }
            }
            Some(TermClass::Anatomy) => {
                let nearest = (0..units.len())
                    .filter(|&v| is_obs(v))
                    .min_by_key(|&v| (v.abs_diff(u), v < u));
                if let (Some(head), Some(tail)) = (nearest.and_then(|v| entity_of_unit[v]), entity_of_unit[u]) {
                    relations.push(Relation { head, tail, label: RelationLabel::LocatedAt });
                }
            }
            _ => {}
        }
    }

    EntityGraph::new(sentence, entities, relations)
}

/// Normalized words plus, per word, whether a clause boundary follows it.
fn tokenize(sentence: &str, lex: &Lexicon) -> (Vec<String>, Vec<bool>) {
    let mut words: Vec<String> = Vec::new();
    let mut breaks: Vec<bool> = Vec::new();
    for raw in sentence.split_whitespace() {
        let word = lex.normalize_word(raw);
        let ends_clause = raw.ends_with(CLAUSE_DELIMITERS);
        let starts_clause = raw.starts_with(CLAUSE_DELIMITERS);
        if starts_clause {
            if let Some(last) = breaks.last_mut() {
                *last = true;
            }
        }
        if word.is_empty() {
            if ends_clause {
                if let Some(last) = breaks.last_mut() {
                    *last = true;
                }
            }
            continue;
        }
        words.push(word);
        breaks.push(ends_clause);
    }
    (words, breaks)
}

fn certainty(units: &[Unit], u: usize, clause_of: &[usize]) -> EntityLabel {
    let clause = clause_of[units[u].start];
    units[..u]
        .iter()
        .rev()
        .take_while(|cue| clause_of[cue.end] == clause)
        .find_map(|cue| match cue.class {
            Some(TermClass::Negation) => Some(EntityLabel::ObsAbsent),
            Some(TermClass::Uncertainty) => Some(EntityLabel::ObsUncertain),
            _ => None,
        })
        .unwrap_or(EntityLabel::ObsPresent)
}

#[cfg(test)]
mod tests {
    use super::*;

    type Tuples = (Vec<(String, EntityLabel)>, Vec<(String, RelationLabel, String)>);

    fn tuples(g: &EntityGraph) -> Tuples {
        let ents = g.entities.iter().map(|e| (e.tokens.clone(), e.label)).collect();
        let rels = g
            .relations()
            .iter()
            .map(|r| (g.entities[r.head].tokens.clone(), r.label, g.entities[r.tail].tokens.clone()))
            .collect();
        (ents, rels)
    }

    #[test]
    fn severe_cardiomegaly() {
        let g = extract_graph("severe cardiomegaly", &Lexicon::builtin()).unwrap();
        let (ents, rels) = tuples(&g);
        assert_eq!(
            ents,
            vec![
                ("severe".to_string(), EntityLabel::ObsPresent),
                ("cardiomegaly".to_string(), EntityLabel::ObsPresent)
            ]
        );
        assert_eq!(rels, vec![("severe".into(), RelationLabel::Modify, "cardiomegaly".into())]);
    }

    #[test]
    fn small_left_pleural_effusion_sentence() {
        let g = extract_graph("there is a small left pleural effusion", &Lexicon::builtin()).unwrap();
        let (ents, rels) = tuples(&g);
        assert_eq!(
            ents,
            vec![
                ("small".to_string(), EntityLabel::ObsPresent),
                ("left".to_string(), EntityLabel::AnatPresent),
                ("pleural effusion".to_string(), EntityLabel::ObsPresent),
            ]
        );
        assert_eq!(g.entities[2].start_ix, 5);
        assert_eq!(g.entities[2].end_ix, 6);
        assert_eq!(rels.len(), 2);
        assert!(rels.contains(&("small".into(), RelationLabel::Modify, "pleural effusion".into())));
        assert!(rels.contains(&("pleural effusion".into(), RelationLabel::LocatedAt, "left".into())));
    }

    #[test]
    fn negated_observation() {
        let g = extract_graph("no pneumothorax", &Lexicon::builtin()).unwrap();
        let (ents, rels) = tuples(&g);
        assert_eq!(ents, vec![("pneumothorax".to_string(), EntityLabel::ObsAbsent)]);
        assert!(rels.is_empty());
    }

    #[test]
    fn negation_scope_ends_at_comma() {
        let g = extract_graph("no effusion, small pneumothorax", &Lexicon::builtin()).unwrap();
        let (ents, _) = tuples(&g);
        assert_eq!(ents[0], ("effusion".to_string(), EntityLabel::ObsAbsent));
        assert_eq!(ents[2], ("pneumothorax".to_string(), EntityLabel::ObsPresent));
    }

    #[test]
    fn uncertainty_cue() {
        let g = extract_graph("cannot exclude small pneumothorax", &Lexicon::builtin()).unwrap();
        let (ents, rels) = tuples(&g);
        assert_eq!(
            ents,
            vec![
                ("small".to_string(), EntityLabel::ObsUncertain),
                ("pneumothorax".to_string(), EntityLabel::ObsUncertain)
            ]
        );
        assert_eq!(rels.len(), 1);
    }

    #[test]
    fn longest_match_wins() {
        let g = extract_graph("pleural effusion", &Lexicon::builtin()).unwrap();
        assert_eq!(g.entities.len(), 1);
        assert_eq!((g.entities[0].start_ix, g.entities[0].end_ix), (0, 1));
    }

    #[test]
    fn modifier_window_counts_units() {
        let lex = Lexicon::builtin();
        let g = extract_graph("moderate right lower lobe opacification", &lex).unwrap();
        let (_, rels) = tuples(&g);
        assert!(rels.contains(&("moderate".into(), RelationLabel::Modify, "opacification".into())));
        assert!(rels.contains(&("opacification".into(), RelationLabel::LocatedAt, "lower lobe".into())));

        let g = extract_graph("small and probably very stable effusion", &lex).unwrap();
        assert!(tuples(&g).1.is_empty());
    }

    #[test]
    fn modifier_does_not_cross_clause() {
        let g = extract_graph("heart size is large, effusion", &Lexicon::builtin()).unwrap();
        assert!(g.relations().is_empty());
    }

    #[test]
    fn anatomy_attaches_to_nearest_observation() {
        let g = extract_graph("effusion and right pneumothorax", &Lexicon::builtin()).unwrap();
        let (_, rels) = tuples(&g);
        assert_eq!(rels, vec![("pneumothorax".into(), RelationLabel::LocatedAt, "right".into())]);
    }

    #[test]
    fn anatomy_without_observation_has_no_relation() {
        let g = extract_graph("the left lung is clear.", &Lexicon::builtin()).unwrap();
        assert_eq!(g.entities.len(), 1);
        assert!(g.relations().is_empty());
    }

    #[test]
    fn empty_sentence() {
        assert_eq!(extract_graph("  ... ", &Lexicon::builtin()), Err(GraphError::EmptySentence));
    }

    #[test]
    fn plural_and_punctuation_normalized() {
        let g = extract_graph("Bilateral pleural effusions.", &Lexicon::builtin()).unwrap();
        let (ents, rels) = tuples(&g);
        assert_eq!(ents[1].0, "pleural effusion");
        assert_eq!(rels, vec![("pleural effusion".into(), RelationLabel::LocatedAt, "bilateral".into())]);
    }
}
