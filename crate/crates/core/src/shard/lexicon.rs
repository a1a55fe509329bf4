use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoundClass {
    Anthrophony,
    Biophony,
    Geophony,
}

impl SoundClass {
    pub const ALL: [SoundClass; 3] = [Self::Anthrophony, Self::Biophony, Self::Geophony];

    /// Short acoustic gloss used in synthetic acoustic-feature answers.
    pub fn texture(self) -> &'static str {
        match self {
            Self::Anthrophony => "steady and mechanical",
            Self::Biophony => "tonal and rhythmic",
            Self::Geophony => "broadband and diffuse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexEntry {
    pub class: SoundClass,
    /// Canonical label, as used for identity scoring.
    pub label: &'static str,
    pub synonyms: [&'static str; 2],
    pub hypernyms: [&'static str; 2],
}

impl LexEntry {
    /// True if `term` is this entry's label, a synonym or a hypernym.
    pub fn relates_to(&self, term: &str) -> bool {
        let t = term.to_lowercase();
        std::iter::once(self.label)
            .chain(self.synonyms)
            .chain(self.hypernyms)
            .any(|x| x.to_lowercase() == t)
    }
}

macro_rules! lex {
    ($($class:ident $label:literal [$s1:literal, $s2:literal] [$h1:literal, $h2:literal];)*) => {
        &[$(LexEntry {
            class: SoundClass::$class,
            label: $label,
            synonyms: [$s1, $s2],
            hypernyms: [$h1, $h2],
        },)*]
    };
}

pub const LEXICON: &[LexEntry] = lex! {
    Anthrophony "Car" ["automobile", "motorcar"] ["vehicle", "machine"];
    Anthrophony "Truck" ["lorry", "rig"] ["vehicle", "conveyance"];
    Anthrophony "Train" ["locomotive", "railway train"] ["vehicle", "transport"];
    Anthrophony "Motorcycle" ["motorbike", "bike"] ["vehicle", "motor vehicle"];
    Anthrophony "Airplane" ["aeroplane", "plane"] ["aircraft", "craft"];
    Anthrophony "Helicopter" ["chopper", "whirlybird"] ["aircraft", "rotorcraft"];
    Anthrophony "Bus" ["autobus", "coach"] ["vehicle", "public transport"];
    Anthrophony "Siren" ["alarm", "warning signal"] ["signal", "device"];
    Anthrophony "Doorbell" ["bell", "buzzer"] ["signaling device", "device"];
    Anthrophony "Speech" ["talking", "spoken language"] ["communication", "vocalization"];
    Anthrophony "Laughter" ["laughing", "laugh"] ["vocalization", "expression"];
    Anthrophony "Singing" ["vocal music", "song"] ["music", "performance"];
    Anthrophony "Applause" ["clapping", "handclapping"] ["approval", "acclaim"];
    Anthrophony "Guitar" ["acoustic guitar", "axe"] ["stringed instrument", "musical instrument"];
    Anthrophony "Piano" ["pianoforte", "keyboard"] ["keyboard instrument", "musical instrument"];
    Anthrophony "Drum" ["drum kit", "tympan"] ["percussion instrument", "musical instrument"];
    Anthrophony "Violin" ["fiddle", "bowed string"] ["bowed instrument", "musical instrument"];
    Anthrophony "Typing" ["typewriting", "keying"] ["writing", "activity"];
    Anthrophony "Hammer" ["hammering", "pounding"] ["tool", "hand tool"];
    Anthrophony "Drill" ["power drill", "boring"] ["tool", "power tool"];
    Anthrophony "Chainsaw" ["chain saw", "power saw"] ["saw", "power tool"];
    Anthrophony "Vacuum cleaner" ["vacuum", "hoover"] ["home appliance", "appliance"];
    Anthrophony "Blender" ["liquidizer", "mixer"] ["kitchen appliance", "appliance"];
    Anthrophony "Telephone" ["phone", "telephone set"] ["electronic equipment", "device"];
    Anthrophony "Clock" ["timepiece", "ticking clock"] ["timekeeper", "instrument"];
    Anthrophony "Footsteps" ["footfalls", "steps"] ["walking", "locomotion"];
    Biophony "Dog" ["canine", "hound"] ["mammal", "domestic animal"];
    Biophony "Cat" ["feline", "kitty"] ["mammal", "domestic animal"];
    Biophony "Cow" ["cattle", "moo cow"] ["bovine", "livestock"];
    Biophony "Horse" ["equine", "steed"] ["mammal", "livestock"];
    Biophony "Pig" ["hog", "swine"] ["mammal", "livestock"];
    Biophony "Sheep" ["lamb", "ewe"] ["ruminant", "livestock"];
    Biophony "Goat" ["billy goat", "nanny goat"] ["ruminant", "livestock"];
    Biophony "Chicken" ["hen", "fowl"] ["poultry", "bird"];
    Biophony "Rooster" ["cock", "cockerel"] ["poultry", "bird"];
    Biophony "Duck" ["mallard", "drake"] ["waterfowl", "bird"];
    Biophony "Goose" ["gander", "honker"] ["waterfowl", "bird"];
    Biophony "Owl" ["hooter", "barn owl"] ["bird of prey", "bird"];
    Biophony "Crow" ["raven", "rook"] ["corvid", "bird"];
    Biophony "Pigeon" ["dove", "rock dove"] ["columbid", "bird"];
    Biophony "Frog" ["toad", "bullfrog"] ["amphibian", "animal"];
    Biophony "Cricket" ["field cricket", "house cricket"] ["insect", "orthopteran"];
    Biophony "Bee" ["honeybee", "bumblebee"] ["insect", "pollinator"];
    Biophony "Mosquito" ["skeeter", "gnat"] ["insect", "pest"];
    Biophony "Fly" ["housefly", "blowfly"] ["insect", "pest"];
    Biophony "Lion" ["big cat", "king of beasts"] ["feline", "predator"];
    Biophony "Wolf" ["timber wolf", "gray wolf"] ["canine", "predator"];
    Biophony "Elephant" ["pachyderm", "tusker"] ["mammal", "herbivore"];
    Biophony "Monkey" ["simian", "ape"] ["primate", "mammal"];
    Biophony "Whale" ["humpback", "leviathan"] ["marine mammal", "mammal"];
    Biophony "Bird song" ["birdsong", "chirping"] ["vocalization", "animal communication"];
    Biophony "Snake" ["serpent", "rattlesnake"] ["reptile", "animal"];
    Geophony "Rain" ["rainfall", "shower"] ["precipitation", "weather"];
    Geophony "Thunder" ["thunderclap", "rumble"] ["weather", "natural phenomenon"];
    Geophony "Wind" ["breeze", "gust"] ["weather", "air current"];
    Geophony "Ocean" ["sea", "surf"] ["body of water", "water"];
    Geophony "Waves" ["breakers", "swell"] ["water movement", "natural phenomenon"];
    Geophony "Stream" ["brook", "creek"] ["watercourse", "body of water"];
    Geophony "River" ["waterway", "torrent"] ["watercourse", "body of water"];
    Geophony "Waterfall" ["cascade", "falls"] ["watercourse", "natural phenomenon"];
    Geophony "Fire" ["blaze", "flames"] ["combustion", "natural phenomenon"];
    Geophony "Crackling fire" ["campfire", "bonfire"] ["fire", "combustion"];
    Geophony "Earthquake" ["quake", "tremor"] ["geological phenomenon", "natural disaster"];
    Geophony "Volcano" ["eruption", "volcanic eruption"] ["geological phenomenon", "natural disaster"];
    Geophony "Avalanche" ["snowslide", "snow slide"] ["natural disaster", "mass wasting"];
    Geophony "Landslide" ["rockslide", "mudslide"] ["natural disaster", "geological phenomenon"];
    Geophony "Hail" ["hailstones", "hailstorm"] ["precipitation", "weather"];
    Geophony "Snow" ["snowfall", "snowstorm"] ["precipitation", "weather"];
    Geophony "Storm" ["tempest", "squall"] ["weather", "atmospheric phenomenon"];
    Geophony "Hurricane" ["cyclone", "typhoon"] ["storm", "atmospheric phenomenon"];
    Geophony "Tornado" ["twister", "whirlwind"] ["storm", "atmospheric phenomenon"];
    Geophony "Drip" ["dripping", "trickle"] ["water", "liquid"];
    Geophony "Splash" ["splashing", "spatter"] ["water", "liquid"];
    Geophony "Ice cracking" ["ice crack", "frost crack"] ["ice", "natural phenomenon"];
    Geophony "Gurgling" ["burbling", "babbling"] ["water", "flow"];
    Geophony "Steam" ["vapor", "hiss"] ["gas", "water"];
    Geophony "Rustling leaves" ["rustle", "leaf rustle"] ["wind", "natural phenomenon"];
    Geophony "Sandstorm" ["dust storm", "haboob"] ["storm", "weather"];
};

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn lexicon_shape() {
        assert_eq!(LEXICON.len(), 78);
        for c in SoundClass::ALL {
            assert_eq!(LEXICON.iter().filter(|e| e.class == c).count(), 26);
        }
        let labels: HashSet<_> = LEXICON.iter().map(|e| e.label.to_lowercase()).collect();
        assert_eq!(labels.len(), 78);
        for e in LEXICON {
            assert_ne!(e.synonyms[0], e.synonyms[1], "{}", e.label);
            assert_ne!(e.hypernyms[0], e.hypernyms[1], "{}", e.label);
            assert!(e.relates_to(&e.label.to_uppercase()));
        }
    }
}
