//! Rule-based generator of gold-annotated sentences with four entity types.
//!
//! Sentences come from fixed templates whose slots are filled from per-type
//! lexicons. A handful of surfaces belong to two types ("Jordan" is a person
//! and a place), so only the surrounding context tells them apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EntitySpan, Sentence};

pub const ENTITY_TYPES: [&str; 4] = ["LOC", "MISC", "ORG", "PER"];

const FIRST_NAMES: &[&str] = &[
    "John", "Maria", "Ahmed", "Li", "Olga", "Pedro", "Anna", "Kenji", "Fatima", "Lars", "Chloe",
    "Ivan", "Priya", "Tomas", "Amara", "Hugo", "Mei", "Rafael", "Ingrid", "Samuel", "Leila",
    "Marco", "Yuki", "Daniel",
];
const LAST_NAMES: &[&str] = &[
    "Smith",
    "Garcia",
    "Khan",
    "Wang",
    "Petrova",
    "Silva",
    "Novak",
    "Tanaka",
    "Haddad",
    "Berg",
    "Dubois",
    "Ivanov",
    "Sharma",
    "Kowalski",
    "Okafor",
    "Laurent",
    "Chen",
    "Moreno",
    "Larsen",
    "Cohen",
    "Rossi",
    "Sato",
    "Mueller",
    "Jordan",
    "Washington",
    "Chester",
];
const PLACES: &[&str] = &[
    "Paris",
    "Lagos",
    "Lima",
    "Oslo",
    "Kyoto",
    "Quito",
    "Dakar",
    "Perth",
    "Austin",
    "Malmo",
    "Porto",
    "Tunis",
    "Hanoi",
    "Bergen",
    "Cusco",
    "Accra",
    "Leeds",
    "Graz",
    "Jordan",
    "Washington",
    "Chester",
    "Georgia",
    "Victoria",
    "Florence",
];
const PLACE_SUFFIXES: &[&str] = &["City", "Valley", "Harbor", "Island"];
const ORG_STEMS: &[&str] = &[
    "Apex", "Nordic", "Summit", "Orion", "Vertex", "Atlas", "Zenith", "Harbor", "Pioneer",
    "Crescent", "Falcon", "Granite", "Meridian", "Sterling", "Beacon", "Cobalt", "Victoria",
    "Georgia", "Florence", "Delta",
];
const ORG_SUFFIXES: &[&str] = &[
    "Corp",
    "Bank",
    "University",
    "Group",
    "Airlines",
    "Motors",
    "Labs",
];
const NATIONALITIES: &[&str] = &[
    "Brazilian",
    "Nigerian",
    "Peruvian",
    "Norwegian",
    "Japanese",
    "Senegalese",
    "Australian",
    "Swedish",
    "Portuguese",
    "Tunisian",
    "Vietnamese",
    "Ghanaian",
    "Austrian",
    "Chilean",
    "Kenyan",
    "Danish",
];
const EVENTS: &[&str] = &["Cup", "Games", "Open", "Festival", "Prize", "Derby"];
const EVENT_STEMS: &[&str] = &["World", "Olympic", "Summer", "Grand", "Delta", "Spring"];

/// Sentence templates; `{PER}`, `{LOC}`, `{ORG}` and `{MISC}` are slots.
const TEMPLATES: &[&str] = &[
    "{PER} said on Tuesday that {ORG} will open an office in {LOC} .",
    "shares of {ORG} fell sharply after {PER} resigned .",
    "the {MISC} team arrived in {LOC} late on Sunday .",
    "{PER} , a {MISC} striker , signed with {ORG} for two seasons .",
    "officials in {LOC} welcomed the decision by {ORG} .",
    "{PER} met {PER} in {LOC} to discuss the merger .",
    "the {MISC} government praised {PER} for the agreement .",
    "{ORG} reported record profits in {LOC} this quarter .",
    "heavy rain flooded parts of {LOC} on Monday , police said .",
    "{PER} won the {MISC} after beating {PER} in the final .",
    "analysts expect {ORG} to announce a deal with {ORG} soon .",
    "a spokesman for {ORG} declined to comment .",
    "{PER} was born in {LOC} and later moved to {LOC} .",
    "the {MISC} prime minister visited {LOC} last week .",
    "tickets for the {MISC} sold out within hours .",
    "{PER} told reporters that the talks had stalled .",
    "{ORG} hired {PER} as its new chief executive .",
    "thousands gathered in {LOC} for the {MISC} .",
    "the company said the plant near {LOC} would close .",
    "{PER} of {ORG} led the delegation to {LOC} .",
];

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("lexicon is never empty")
}

fn surface<R: Rng>(rng: &mut R, ty: &str, template_event: bool) -> Vec<String> {
    let words: Vec<&str> = match ty {
        "PER" => match rng.gen_range(0..3) {
            0 => vec![pick(rng, FIRST_NAMES), pick(rng, LAST_NAMES)],
            1 => vec![pick(rng, LAST_NAMES)],
            _ => vec![pick(rng, FIRST_NAMES)],
        },
        "LOC" => {
            if rng.gen_bool(0.25) {
                vec![pick(rng, PLACES), pick(rng, PLACE_SUFFIXES)]
            } else {
                vec![pick(rng, PLACES)]
            }
        }
        "ORG" => {
            if rng.gen_bool(0.2) {
                vec![
                    pick(rng, ORG_STEMS),
                    pick(rng, ORG_STEMS),
                    pick(rng, ORG_SUFFIXES),
                ]
            } else {
                vec![pick(rng, ORG_STEMS), pick(rng, ORG_SUFFIXES)]
            }
        }
        _ => {
            if template_event {
                vec![pick(rng, EVENT_STEMS), pick(rng, EVENTS)]
            } else {
                vec![pick(rng, NATIONALITIES)]
            }
        }
    };
    words.into_iter().map(str::to_string).collect()
}

/// Fills one template. MISC slots preceded by "the" and followed by a
/// non-noun position ("won the {MISC} after") hold events; the rest hold
/// nationalities.
fn fill<R: Rng>(rng: &mut R, template: &str) -> Sentence {
    let parts: Vec<&str> = template.split_whitespace().collect();
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let slot = part.strip_prefix('{').and_then(|p| p.strip_suffix('}'));
        match slot {
            Some(ty) => {
                let next = parts.get(i + 1).copied().unwrap_or("");
                let event = ty == "MISC" && matches!(next, "after" | "sold" | "." | "in");
                let words = surface(rng, ty, event);
                let start = tokens.len() + 1;
                tokens.extend(words);
                spans.push(EntitySpan::new(start, tokens.len(), ty));
            }
            None => tokens.push(part.to_string()),
        }
    }
    Sentence::new(tokens).with_gold(spans)
}

/// Generates `count` gold-annotated sentences, deterministically in `seed`.
pub fn generate(count: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let template = pick(&mut rng, TEMPLATES);
            fill(&mut rng, template)
        })
        .collect()
}
