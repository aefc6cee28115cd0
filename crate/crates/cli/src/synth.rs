//! Synthetic two-party corpus with known reply intents.
//!
//! Each intent has one core reply and a few surface variants that differ by
//! at most one token, so variants of one intent are near-duplicates while
//! different intents share little vocabulary.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{ensure, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replybank_core::corpus::{preprocess, IdentityKind, IdentitySpan, RawConversation, RawMessage, Speaker};
use serde::{Deserialize, Serialize};

const FAMILIES: &[(&str, &str, [&str; 3])] = &[
    ("duration", "how long have you been having these symptoms", ["i have a sore throat and a cough", "i keep coughing and my throat hurts", "i have had a runny nose and sneezing"]),
    ("sleep", "try to get seven to nine hours of sleep every night", ["i feel tired all the time", "i am exhausted during the day", "how much should i be sleeping"]),
    ("sign-off", "take care and i hope you feel better soon", ["thank you so much goodbye", "thanks for the help bye", "great thanks have a nice day"]),
    ("photo", "could you please send a photo of the rash", ["i have a red rash on my arm", "there is an itchy rash on my leg", "my skin has red bumps"]),
    ("fluids", "make sure you drink plenty of fluids and rest", ["i have a fever and chills", "my temperature is high today", "i feel feverish and weak"]),
    ("ibuprofen", "you can take ibuprofen for the pain every six hours", ["i have a bad headache", "my back hurts a lot", "my knee is really sore"]),
    ("allergies", "do you have any known allergies to medications", ["can you prescribe me antibiotics", "i think i need a prescription", "what medicine should i take for this"]),
    ("emergency", "please go to the nearest emergency room right away", ["i have severe chest pain", "i can not breathe properly", "my chest feels very tight"]),
    ("pregnancy", "is there any chance that you could be pregnant", ["my period is late", "i have been feeling nauseous every morning", "i missed my period this month"]),
    ("follow-up", "please follow up with your primary care doctor this week", ["should i see someone in person", "do i need to visit a clinic", "who should i see about this"]),
    ("blood-pressure", "have you checked your blood pressure at home recently", ["i get dizzy when i stand up", "i feel lightheaded sometimes", "i have been having dizzy spells"]),
    ("medications", "what medications are you currently taking right now", ["i have high blood pressure", "i am diabetic", "i have a heart condition"]),
    ("eye-drops", "try using artificial tears a few times a day", ["my eyes are dry and itchy", "my eyes feel gritty", "my eyes are red and watery"]),
    ("ear", "is there any discharge or fluid coming from the ear", ["my ear hurts", "i have pain in my left ear", "my ear feels blocked"]),
    ("stomach", "have you had any vomiting or diarrhea with this", ["my stomach hurts", "i have stomach cramps", "i feel sick to my stomach"]),
    ("urinary", "do you have any burning or pain when you urinate", ["i need to pee all the time", "i think i have a bladder infection", "i keep going to the bathroom"]),
    ("cold-compress", "apply a cold compress to the area for twenty minutes", ["i twisted my ankle", "my wrist is swollen", "i bumped my knee and it is swollen"]),
    ("stress", "it sounds like you have been under a lot of stress", ["i feel anxious all the time", "i am worried and can not relax", "i have been feeling really stressed"]),
    ("vaccine", "yes it is safe to get the flu vaccine now", ["can i get a flu shot", "is the flu vaccine safe for me", "should i get vaccinated this year"]),
    ("blood-work", "we can order some blood work to check your levels", ["i want to check my cholesterol", "can i get my thyroid tested", "i want to know my iron levels"]),
    ("reflux", "try eating smaller meals and avoid spicy foods", ["i get heartburn after eating", "i have acid reflux", "my chest burns after meals"]),
    ("sunburn", "wear sunscreen and stay out of the sun for a few days", ["i got a bad sunburn", "my skin is peeling from the sun", "my shoulders are burnt"]),
    ("dentist", "you should see a dentist about that tooth soon", ["my tooth hurts", "i have a toothache", "my gums are bleeding"]),
    ("greeting", "hi there how can i help you today", ["hello", "hi i have a question", "good morning doctor"]),
];

const PREFIXES: [&str; 3] = ["ok", "alright", "sure"];
const NAMES: [&str; 6] = ["Maria", "John", "Aisha", "Wei", "Carlos", "Emma"];
const NOISE: [&str; 3] = ["let me look into reference", "i am checking record", "noted ticket"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Intent {
    pub intent_id: u32,
    pub name: String,
    pub reply: String,
    /// Every normalized form a reply of this intent can take.
    pub variants: Vec<String>,
    pub prompts: Vec<String>,
}

/// Ground truth written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Truth {
    pub seed: u64,
    pub classes: usize,
    pub conversations: usize,
    pub doctor_turns: u64,
    /// Doctor turns that carry an intent reply (the rest are noise).
    pub intent_turns: u64,
    pub intents: Vec<Intent>,
}

impl Truth {
    /// Normalized reply text to intent id.
    pub fn labels(&self) -> BTreeMap<String, u32> {
        self.intents
            .iter()
            .flat_map(|i| i.variants.iter().map(move |v| (v.clone(), i.intent_id)))
            .collect()
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.random_range(0..ONSETS.len())], VOWELS[rng.random_range(0..VOWELS.len())]))
        .collect()
}

fn intent(id: usize) -> Intent {
    let (name, reply, prompts) = match FAMILIES.get(id) {
        Some((n, r, p)) => (n.to_string(), r.to_string(), p.iter().map(|s| s.to_string()).collect()),
        None => {
            // beyond the written families: invented vocabulary, fixed per id
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + id as u64);
            let reply = (0..8).map(|_| pseudo_word(&mut rng)).collect::<Vec<_>>().join(" ");
            let prompts = (0..3)
                .map(|_| (0..4).map(|_| pseudo_word(&mut rng)).collect::<Vec<_>>().join(" "))
                .collect();
            (format!("intent-{id}"), reply, prompts)
        }
    };
    let mut variants = vec![reply.clone()];
    variants.extend(PREFIXES.iter().map(|p| format!("{p} {reply}")));
    variants.push(format!("{reply} <patient_name>"));
    Intent {
        intent_id: id as u32,
        name,
        reply,
        variants,
        prompts,
    }
}

fn surface(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut s = text.to_string();
    if rng.random_bool(0.5) {
        let mut chars = s.chars();
        if let Some(first) = chars.next() {
            s = first.to_uppercase().chain(chars).collect();
        }
    }
    let end = ["", ".", "!", "!!", "?"][rng.random_range(0..5)];
    s.push_str(end);
    s
}

fn message(speaker: Speaker, text: String, pii: Vec<IdentitySpan>) -> RawMessage {
    RawMessage { speaker, text, pii }
}

fn doctor_reply(rng: &mut ChaCha8Rng, intent: &Intent) -> RawMessage {
    let roll = rng.random_range(0..100);
    if roll < 40 {
        return message(Speaker::Doctor, surface(rng, &intent.reply), vec![]);
    }
    if roll < 85 {
        let prefix = PREFIXES[rng.random_range(0..PREFIXES.len())];
        let sep = if rng.random_bool(0.5) { ", " } else { " " };
        return message(Speaker::Doctor, surface(rng, &format!("{prefix}{sep}{}", intent.reply)), vec![]);
    }
    let name = NAMES[rng.random_range(0..NAMES.len())];
    let head = format!("{}, ", intent.reply);
    let start = head.chars().count();
    let text = surface(rng, &format!("{head}{name}"));
    let span = IdentitySpan::new(start, start + name.chars().count(), IdentityKind::Patient);
    message(Speaker::Doctor, text, vec![span])
}

pub fn intents(classes: usize) -> Vec<Intent> {
    (0..classes).map(intent).collect()
}

/// Generate `conversations` conversations over `classes` intents.
pub fn generate(classes: usize, conversations: usize, seed: u64) -> Result<(Vec<RawConversation>, Truth)> {
    ensure!(classes >= 2, "need at least 2 classes");
    ensure!(conversations >= classes, "need at least as many conversations as classes");
    let intents = intents(classes);
    // mildly skewed intent frequencies
    let weights: Vec<f64> = (0..classes).map(|i| 1.0 / ((i + 2) as f64).sqrt()).collect();
    let pick = WeightedIndex::new(&weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(conversations);
    let (mut doctor_turns, mut intent_turns) = (0u64, 0u64);
    for c in 0..conversations {
        let mut messages = Vec::new();
        let exchanges = rng.random_range(2..=5);
        for e in 0..exchanges {
            // every intent shows up at least once
            let it = if e == 0 && c < classes { &intents[c] } else { &intents[pick.sample(&mut rng)] };
            let which = rng.random_range(0..it.prompts.len());
            let prompt = surface(&mut rng, &it.prompts[which]);
            let words: Vec<&str> = prompt.split(' ').collect();
            if words.len() > 2 && rng.random_bool(0.2) {
                // sent as two messages; ingestion merges them into one turn
                let cut = words.len() / 2;
                messages.push(message(Speaker::Patient, words[..cut].join(" "), vec![]));
                messages.push(message(Speaker::Patient, words[cut..].join(" "), vec![]));
            } else {
                messages.push(message(Speaker::Patient, prompt, vec![]));
            }
            doctor_turns += 1;
            if rng.random_bool(0.85) {
                intent_turns += 1;
                messages.push(doctor_reply(&mut rng, it));
            } else {
                let noise = NOISE[rng.random_range(0..NOISE.len())];
                let text = format!("{noise} {}", rng.random_range(0..1_000_000_000u64));
                messages.push(message(Speaker::Doctor, text, vec![]));
            }
        }
        out.push(RawConversation {
            id: format!("conv-{c:05}"),
            messages,
        });
    }
    for i in &intents {
        for v in &i.variants {
            debug_assert_eq!(&preprocess(v, &[])?, v);
        }
    }
    Ok((
        out,
        Truth {
            seed,
            classes,
            conversations,
            doctor_turns,
            intent_turns,
            intents,
        },
    ))
}

pub fn write_corpus<W: Write>(mut w: W, conversations: &[RawConversation]) -> Result<()> {
    for c in conversations {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
