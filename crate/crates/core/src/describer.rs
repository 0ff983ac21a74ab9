//! Scene sentences from ranged objects.
//!
//! Objects that share heading and direction and sit within a distance band
//! are merged into one group; groups are reported nearest first. Each group
//! renders as `"<counts>, at <d> meters away, <is|are> <phrase>"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::{Direction, Heading, RangedObject};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMember {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectGroup {
    pub members: Vec<GroupMember>,
    /// Nearest member.
    pub distance_m: f64,
    pub heading: Heading,
    pub direction: Direction,
}

impl ObjectGroup {
    pub fn total(&self) -> usize {
        self.members.iter().map(|m| m.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub text: String,
    pub groups_reported: Vec<ObjectGroup>,
}

/// Phrase strings used by [`render_description`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Templates {
    pub toward: String,
    pub away: String,
    #[serde(rename = "static")]
    pub still: String,
    pub left: String,
    pub center: String,
    pub right: String,
    pub empty: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            toward: "headed towards you".into(),
            away: "headed away from you".into(),
            still: "standing still".into(),
            left: "to your left".into(),
            center: "ahead".into(),
            right: "to your right".into(),
            empty: "Nothing detected nearby.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriberConfig {
    pub band_width_m: f64,
    pub max_groups: usize,
    pub templates: Templates,
}

impl Default for DescriberConfig {
    fn default() -> Self {
        Self {
            band_width_m: 0.25,
            max_groups: 3,
            templates: Templates::default(),
        }
    }
}

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("woman", "women"),
    ("man", "men"),
    ("person", "people"),
    ("child", "children"),
    ("foot", "feet"),
    ("mouse", "mice"),
    ("goose", "geese"),
    ("sheep", "sheep"),
];

pub fn pluralize(label: &str) -> String {
    if let Some((_, plural)) = IRREGULAR_PLURALS.iter().find(|(s, _)| *s == label) {
        return (*plural).to_string();
    }
    if ["s", "x", "z", "ch", "sh"].iter().any(|suf| label.ends_with(suf)) {
        return format!("{label}es");
    }
    if let Some(stem) = label.strip_suffix('y') {
        if !stem.ends_with(['a', 'e', 'i', 'o', 'u']) && !stem.is_empty() {
            return format!("{stem}ies");
        }
    }
    format!("{label}s")
}

struct Bucket {
    distance_m: f64,
    heading: Heading,
    direction: Direction,
    counts: BTreeMap<String, usize>,
}

/// Merges nearby objects into groups, nearest first, at most `max_groups`.
pub fn group_and_prioritize(objects: &[RangedObject], cfg: &DescriberConfig) -> Vec<ObjectGroup> {
    let mut sorted: Vec<&RangedObject> = objects.iter().collect();
    sorted.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then_with(|| a.detection.label.cmp(&b.detection.label))
    });

    let mut buckets: Vec<Bucket> = Vec::new();
    for obj in sorted {
        let slot = buckets.iter_mut().find(|b| {
            b.heading == obj.heading
                && b.direction == obj.direction
                && obj.distance_m - b.distance_m <= cfg.band_width_m
        });
        match slot {
            Some(b) => *b.counts.entry(obj.detection.label.clone()).or_default() += 1,
            None => buckets.push(Bucket {
                distance_m: obj.distance_m,
                heading: obj.heading,
                direction: obj.direction,
                counts: BTreeMap::from([(obj.detection.label.clone(), 1)]),
            }),
        }
    }

    buckets
        .into_iter()
        .take(cfg.max_groups)
        .map(|b| {
            let mut members: Vec<GroupMember> = b
                .counts
                .into_iter()
                .map(|(label, count)| GroupMember { label, count })
                .collect();
            members.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.label.cmp(&y.label)));
            ObjectGroup {
                members,
                distance_m: b.distance_m,
                heading: b.heading,
                direction: b.direction,
            }
        })
        .collect()
}

fn direction_phrase(direction: Direction, t: &Templates) -> &str {
    match direction {
        Direction::Left => &t.left,
        Direction::Center => &t.center,
        Direction::Right => &t.right,
    }
}

fn render_group(g: &ObjectGroup, t: &Templates) -> String {
    let members = g
        .members
        .iter()
        .map(|m| {
            let noun = if m.count == 1 {
                m.label.clone()
            } else {
                pluralize(&m.label)
            };
            format!("{} {}", m.count, noun)
        })
        .collect::<Vec<_>>()
        .join(" and ");
    let verb = if g.total() == 1 { "is" } else { "are" };
    let phrase = match g.heading {
        Heading::Toward => t.toward.clone(),
        Heading::Away => t.away.clone(),
        Heading::Static => format!("{} {}", t.still, direction_phrase(g.direction, t)),
        Heading::Unknown => direction_phrase(g.direction, t).to_string(),
    };
    format!("{members}, at {:.2} meters away, {verb} {phrase}", g.distance_m)
}

pub fn render_description(groups: &[ObjectGroup]) -> SceneDescription {
    render_with(groups, &Templates::default())
}

pub fn render_with(groups: &[ObjectGroup], templates: &Templates) -> SceneDescription {
    let text = if groups.is_empty() {
        templates.empty.clone()
    } else {
        let clauses: Vec<String> = groups.iter().map(|g| render_group(g, templates)).collect();
        format!("{}.", clauses.join("; "))
    };
    SceneDescription {
        text,
        groups_reported: groups.to_vec(),
    }
}

/// Groups, prioritizes and renders in one go.
pub fn describe(objects: &[RangedObject], cfg: &DescriberConfig) -> SceneDescription {
    render_with(&group_and_prioritize(objects, cfg), &cfg.templates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{BBox, Detection};
    use proptest::prelude::*;

    fn obj(label: &str, d: f64, heading: Heading, direction: Direction) -> RangedObject {
        RangedObject {
            detection: Detection::new(label, 0.9, BBox::new(0.0, 0.0, 10.0, 10.0)),
            distance_m: d,
            direction,
            heading,
        }
    }

    fn scene() -> Vec<RangedObject> {
        let mut v: Vec<RangedObject> = [1.36, 1.39, 1.42, 1.45]
            .iter()
            .map(|&d| obj("woman", d, Heading::Toward, Direction::Center))
            .collect();
        v.push(obj("man", 1.40, Heading::Toward, Direction::Center));
        v
    }

    #[test]
    fn groups_the_crowd() {
        let groups = group_and_prioritize(&scene(), &DescriberConfig::default());
        assert_eq!(groups.len(), 1);
        assert_eq!(
            groups[0].members,
            vec![
                GroupMember {
                    label: "woman".into(),
                    count: 4
                },
                GroupMember {
                    label: "man".into(),
                    count: 1
                }
            ]
        );
        assert_eq!(groups[0].distance_m, 1.36);
    }

    #[test]
    fn crowd_sentence() {
        let d = describe(&scene(), &DescriberConfig::default());
        assert_eq!(
            d.text,
            "4 women and 1 man, at 1.36 meters away, are headed towards you."
        );
    }

    #[test]
    fn single_static_car() {
        let g = ObjectGroup {
            members: vec![GroupMember {
                label: "car".into(),
                count: 1,
            }],
            distance_m: 6.0,
            heading: Heading::Static,
            direction: Direction::Left,
        };
        assert_eq!(
            render_description(&[g]).text,
            "1 car, at 6.00 meters away, is standing still to your left."
        );
    }

    #[test]
    fn empty_scene() {
        assert!(group_and_prioritize(&[], &DescriberConfig::default()).is_empty());
        assert_eq!(render_description(&[]).text, "Nothing detected nearby.");
    }

    #[test]
    fn distant_objects_form_ordered_groups() {
        let objs = vec![
            obj("car", 12.0, Heading::Away, Direction::Right),
            obj("dog", 2.0, Heading::Unknown, Direction::Left),
        ];
        let d = describe(&objs, &DescriberConfig::default());
        assert_eq!(d.groups_reported.len(), 2);
        assert_eq!(
            d.text,
            "1 dog, at 2.00 meters away, is to your left; 1 car, at 12.00 meters away, is headed away from you."
        );
    }

    #[test]
    fn caps_group_count() {
        let objs: Vec<RangedObject> = (0..6)
            .map(|i| obj("car", 1.0 + f64::from(i), Heading::Static, Direction::Center))
            .collect();
        let groups = group_and_prioritize(&objs, &DescriberConfig::default());
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[2].distance_m, 3.0);
    }

    #[test]
    fn heading_and_direction_split_groups() {
        let objs = vec![
            obj("person", 2.0, Heading::Toward, Direction::Left),
            obj("person", 2.1, Heading::Toward, Direction::Right),
            obj("person", 2.1, Heading::Away, Direction::Left),
        ];
        assert_eq!(group_and_prioritize(&objs, &DescriberConfig::default()).len(), 3);
    }

    #[test]
    fn template_overrides_apply() {
        let cfg = DescriberConfig {
            templates: Templates {
                toward: "coming at you".into(),
                ..Templates::default()
            },
            ..DescriberConfig::default()
        };
        let d = describe(&[obj("dog", 3.0, Heading::Toward, Direction::Center)], &cfg);
        assert_eq!(d.text, "1 dog, at 3.00 meters away, is coming at you.");
    }

    #[test]
    fn plurals() {
        assert_eq!(pluralize("woman"), "women");
        assert_eq!(pluralize("person"), "people");
        assert_eq!(pluralize("car"), "cars");
        assert_eq!(pluralize("bus"), "buses");
        assert_eq!(pluralize("bench"), "benches");
        assert_eq!(pluralize("puppy"), "puppies");
        assert_eq!(pluralize("toy"), "toys");
    }

    fn arb_object() -> impl Strategy<Value = RangedObject> {
        (
            prop::sample::select(vec!["person", "car", "dog", "bicycle", "woman"]),
            0.2f64..30.0,
            prop::sample::select(vec![Heading::Toward, Heading::Away, Heading::Static, Heading::Unknown]),
            prop::sample::select(vec![Direction::Left, Direction::Center, Direction::Right]),
        )
            .prop_map(|(l, d, h, dir)| obj(l, d, h, dir))
    }

    proptest! {
        #[test]
        fn rendering_invariants(objs in prop::collection::vec(arb_object(), 0..12)) {
            let cfg = DescriberConfig::default();
            let groups = group_and_prioritize(&objs, &cfg);
            let a = render_description(&groups);
            let b = render_description(&groups);
            prop_assert_eq!(&a.text, &b.text);

            for w in groups.windows(2) {
                prop_assert!(w[0].distance_m <= w[1].distance_m);
            }
            if let Some(first) = groups.first() {
                let nearest = objs.iter().map(|o| o.distance_m).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(first.distance_m, nearest);
                let lead = format!("at {:.2} meters", first.distance_m);
                prop_assert!(a.text.find(&lead) == a.text.find("at "));
            }
            for g in &groups {
                for m in &g.members {
                    prop_assert!(objs.iter().any(|o| o.detection.label == m.label));
                }
                let text = format!(", at {:.2} meters away", g.distance_m);
                prop_assert!(a.text.contains(&text));
            }
            if groups.len() < cfg.max_groups {
                let total: usize = groups.iter().map(ObjectGroup::total).sum();
                prop_assert_eq!(total, objs.len());
            }
        }
    }
}
