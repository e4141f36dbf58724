"""Writes the bundled fixture datasets. Output is deterministic; rerun only
when the fixtures should change."""

import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))

# recognizer confusions: gold word -> plausible wrong words
CONFUSIONS = {
    "won": ["one"], "gain": ["game"], "total": ["towel", "tow"], "year": ["ear"],
    "team": ["teen"], "bowl": ["ball"], "which": ["witch"], "where": ["wear"],
    "many": ["mini"], "score": ["store"], "first": ["thirst"], "river": ["liver"],
    "city": ["sitting"], "built": ["build"], "named": ["name"], "four": ["for"],
    "flows": ["flow"], "capital": ["capitol"], "wrote": ["rote"], "king": ["kin"],
    "born": ["bourne"], "war": ["wore"], "sea": ["see"], "led": ["lead"],
    "teach": ["reach"], "rome": ["roam"], "tower": ["power"], "main": ["mane"],
    "peace": ["piece"], "whose": ["who's"], "nineteen": ["ninety"], "hundred": ["hunter"],
    "coach": ["couch"], "beat": ["beet"], "pope": ["hope"], "mountain": ["mounting"],
    "flight": ["fight"], "fare": ["fair"], "ground": ["round"], "meal": ["meel"],
    "boston": ["austin"], "denver": ["ever"], "airport": ["report"],
    "what": ["watt"], "who": ["hue"], "when": ["win"], "how": ["now"], "is": ["his"],
    "did": ["dead"], "does": ["dose"], "earth": ["birth"], "head": ["had"],
    "highest": ["hikers"], "person": ["parson"], "moon": ["noon"], "players": ["prayers"],
    "string": ["sting"], "painting": ["pointing"], "hangs": ["hands"], "italy": ["italic"],
    "australia": ["austria"], "cathedral": ["cathedra"], "completed": ["competed"],
    "method": ["metal"], "schools": ["skulls"], "early": ["curly"], "hamlet": ["hamlin"],
    "ocean": ["motion"], "reach": ["beach"], "amazon": ["amazing"], "defense": ["fence"],
    "wessex": ["essex"], "marie": ["mary"], "curie": ["curry"], "introduced": ["reduced"],
    "calendar": ["colander"], "leaning": ["leaving"], "final": ["vinyl"], "fifty": ["fifteen"],
    "super": ["souper"], "houston": ["huston"], "quartet": ["court"], "after": ["laughter"],
    "flow": ["floe"], "nile": ["mile"], "yards": ["yarns"], "louvre": ["lover"],
    "show": ["shore"], "flights": ["fights"], "from": ["form"], "cheapest": ["sheepest"],
    "transportation": ["transportations"], "there": ["their"], "airline": ["airlines"],
    "flies": ["fries"], "dallas": ["palace"], "atlanta": ["atlantic"], "code": ["coat"],
    "mean": ["mien"], "type": ["tight"], "aircraft": ["aircrafts"], "used": ["use"],
    "served": ["surfed"], "time": ["dime"], "leave": ["leaf"], "go": ["goat"],
    "closest": ["closet"], "downtown": ["down"], "list": ["lust"], "san": ["sun"],
    "francisco": ["frisco"], "monday": ["sunday"], "much": ["match"], "trip": ["strip"],
    "most": ["mist"], "offered": ["often"], "morning": ["mourning"],
    "abbreviation": ["aberration"], "danube": ["then"], "westphalia": ["westfalia"],
}

SQA = [
    ("sb50", "Super Bowl 50 was played in 2016. The Denver Broncos beat the Carolina Panthers to win their third title.",
     "which team won super bowl fifty", ["Denver Broncos", "the Denver Broncos"]),
    ("sb50-yards", "Denver gained 194 total yards in the game while Carolina gained 315.",
     "how many total yards did denver gain", ["194"]),
    ("nile", "The Nile is a major river in Africa. It flows north into the Mediterranean Sea.",
     "which sea does the nile river flow into", ["the Mediterranean Sea", "Mediterranean"]),
    ("eiffel", "The Eiffel Tower was built in 1889 for the World Fair in Paris.",
     "when was the eiffel tower built", ["1889"]),
    ("rote", "Early schools taught children mostly by memorization, a method often described as teach by rote.",
     "what method did early schools use to teach", ["teach by rote", "memorization"]),
    ("nineteen", "The cathedral was completed in nineteen hundred after decades of work.",
     "in which year was the cathedral completed", ["nineteen hundred"]),
    ("patriots", "In the final the New England Patriots defeated the Seattle Seahawks.",
     "which team won the final", ["the new england patriots"]),
    ("rome", "Rome is the capital city of Italy and was founded on seven hills.",
     "what is the capital city of italy", ["Rome"]),
    ("everest", "Mount Everest is the highest mountain on Earth and lies on the border of Nepal and China.",
     "what is the highest mountain on earth", ["Mount Everest", "Everest"]),
    ("shakespeare", "William Shakespeare wrote Hamlet around 1600 while living in London.",
     "who wrote hamlet", ["William Shakespeare", "Shakespeare"]),
    ("amazon", "The Amazon river flows through Brazil, Peru and Colombia before reaching the Atlantic.",
     "which ocean does the amazon river reach", ["the Atlantic", "Atlantic"]),
    ("peace", "The treaty of Westphalia brought peace to Europe in 1648 after the Thirty Years War.",
     "which war ended with the peace of westphalia", ["the Thirty Years War"]),
    ("coach", "Gary Kubiak was the head coach of the Broncos during their championship season.",
     "who was the head coach of the broncos", ["Gary Kubiak"]),
    ("king", "Alfred the Great was king of Wessex and led the defense against Viking raids.",
     "which king led the defense of wessex", ["Alfred the Great", "Alfred"]),
    ("born", "Marie Curie was born in Warsaw in 1867 and later moved to Paris.",
     "where was marie curie born", ["Warsaw"]),
    ("pope", "Pope Gregory XIII introduced the Gregorian calendar in 1582.",
     "which pope introduced the calendar", ["Gregory XIII", "Pope Gregory XIII"]),
    ("tower", "The Leaning Tower of Pisa began to tilt during construction in the twelfth century.",
     "in which city is the leaning tower", ["Pisa"]),
    ("score", "Manning threw for 141 yards and the final score was 24 to 10.",
     "what was the final score", ["24 to 10"]),
    ("first", "Neil Armstrong was the first person to walk on the Moon in 1969.",
     "who was the first person on the moon", ["Neil Armstrong"]),
    ("capital", "Canberra was chosen as the capital of Australia as a compromise between Sydney and Melbourne.",
     "what is the capital of australia", ["Canberra"]),
    ("named", "The city of Houston was named after Sam Houston, a general of the Texas revolution.",
     "who was the city of houston named after", ["Sam Houston"]),
    ("four", "A string quartet is made up of four players: two violins, a viola and a cello.",
     "how many players are in a string quartet", ["four"]),
    ("whose", "The Mona Lisa, whose painter was Leonardo da Vinci, hangs in the Louvre.",
     "whose painting hangs in the louvre", ["Leonardo da Vinci"]),
    ("danube", "The Danube flows through ten countries and empties into the Black Sea.",
     "which sea does the danube flow into", ["the Black Sea"]),
]

# number of recognition errors per SQA example, cycling
ERRORS = [0, 0, 1, 2, 0, 1, 3, 0, 2, 1, 4, 0, 1, 2, 0, 3, 1, 0, 2, 0, 5, 1, 3, 2]

IC_LABELS = ["abbreviation", "aircraft", "airfare", "airline", "airport", "flight",
             "flight_time", "ground_service", "meal", "quantity"]

IC = [
    ("ic01", "show me flights from boston to denver", "flight"),
    ("ic02", "what is the cheapest fare from denver to boston", "airfare"),
    ("ic03", "what ground transportation is there in boston", "ground_service"),
    ("ic04", "which airline flies from dallas to atlanta", "airline"),
    ("ic05", "what does the fare code y mean", "abbreviation"),
    ("ic06", "what type of aircraft is used on that flight", "aircraft"),
    ("ic07", "is a meal served on the flight to denver", "meal"),
    ("ic08", "what time does the first flight leave boston", "flight_time"),
    ("ic09", "how many flights go from dallas to boston", "quantity"),
    ("ic10", "which airport is closest to downtown denver", "airport"),
    ("ic11", "list flights from boston to san francisco on monday", "flight"),
    ("ic12", "how much is a round trip fare to austin", "airfare"),
    ("ic13", "is there ground transportation from the airport to the city", "ground_service"),
    ("ic14", "what airline has the most flights to denver", "airline"),
    ("ic15", "what meal is offered on the morning flight", "meal"),
    ("ic16", "what does the abbreviation ap mean", "abbreviation"),
]

IC_ERRORS = [0, 1, 2, 0, 1, 0, 2, 1, 0, 3, 1, 0, 2, 1, 0, 1]


def weights(p):
    lp = math.log(p)
    a = round(0.8 * lp, 12)
    return a, round(lp - a, 12)


def slf(name, slots, step=0.25):
    """slots: list of [(word or None, prob)], one per position."""
    arcs = []
    for i, slot in enumerate(slots):
        for w, p in slot:
            arcs.append((i, i + 1, w, *weights(p)))
    out = [f"UTTERANCE={name}", f"N={len(slots) + 1} L={len(arcs)}"]
    out += [f"I={n} t={n * step:.2f}" for n in range(len(slots) + 1)]
    for j, (s, e, w, a, l) in enumerate(arcs):
        out.append(f"J={j} S={s} E={e} W={w or '!NULL'} a={a} l={l}")
    return "\n".join(out) + "\n"


def sausage(words, n_errors, rng):
    """Each erroneous position gets the gold word and a competitor that wins;
    every other position is certain, apart from a weak optional deletion."""
    candidates = [i for i, w in enumerate(words) if w in CONFUSIONS]
    rng.shuffle(candidates)
    wrong = set(candidates[:n_errors])
    if len(wrong) < n_errors:
        raise SystemExit(f"not enough confusable words in {' '.join(words)!r}")
    slots = []
    for i, w in enumerate(words):
        if i in wrong:
            alts = CONFUSIONS[w]
            top = rng.choice([0.55, 0.6, 0.65])
            gold = round(1.0 - top - (0.05 if len(alts) > 1 else 0.0), 2)
            slot = [(alts[0], top), (w, gold)]
            if len(alts) > 1:
                slot.append((alts[1], 0.05))
            rng.shuffle(slot)
            slots.append(slot)
        elif w in ("the", "a", "of") and rng.random() < 0.5:
            slots.append([(w, 0.9), (None, 0.1)])
        else:
            slots.append([(w, 1.0)])
    return slots


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def main():
    rng = random.Random(20240607)

    rows = []
    for k, ((eid, ctx, q, answers), n_err) in enumerate(zip(SQA, ERRORS)):
        words = q.split()
        text = slf(eid, sausage(words, n_err, rng))
        row = {"id": eid, "context": ctx, "question": q, "answers": answers}
        if k % 4 == 3:
            row["lattice_slf"] = text
        else:
            rel = f"lattices/{eid}.slf"
            write(os.path.join(HERE, "sqa", rel), text)
            row["lattice"] = rel
        rows.append(json.dumps(row))
    write(os.path.join(HERE, "sqa", "dev.jsonl"), "\n".join(rows) + "\n")

    rows = []
    for (eid, cmd, intent), n_err in zip(IC, IC_ERRORS):
        text = slf(eid, sausage(cmd.split(), n_err, rng))
        rows.append(json.dumps({"id": eid, "command": cmd, "intent": intent, "lattice_slf": text}))
    write(os.path.join(HERE, "ic", "dev.jsonl"), "\n".join(rows) + "\n")
    write(os.path.join(HERE, "ic", "labels.txt"), "\n".join(IC_LABELS) + "\n")

    # same six words, one more two-way ambiguous position per level
    base = "please list the morning flights today".split()
    alts = ["police", "lost", "a", "mourning", "fights", "to day"]
    for level in range(len(base)):
        slots = []
        for i, w in enumerate(base):
            if i < level:
                slots.append([(w, 0.55), (alts[i].replace(" ", "_"), 0.45)])
            else:
                slots.append([(w, 0.85), (alts[i].replace(" ", "_"), 0.15)])
        write(os.path.join(HERE, "lattices", f"ambiguity_{level}.slf"), slf(f"ambiguity_{level}", slots))


if __name__ == "__main__":
    main()
