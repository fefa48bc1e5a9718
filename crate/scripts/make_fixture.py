#!/usr/bin/env python3
"""Regenerates the bundled offline fixture under data/.

Outputs: fixture_kg.json, wordnet_index.tsv, vg_objects.jsonl,
vg_relations.jsonl, gld_images.csv. Deterministic: no randomness.
"""
import csv
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "data")

P = {
    "instance of": "P31", "subclass of": "P279", "country": "P17",
    "country of origin": "P495", "height": "P2048", "width": "P2049",
    "mass": "P2067", "life expectancy": "P2250", "energy per unit mass": "P4806",
    "population": "P1082", "official language": "P37", "currency": "P38",
    "capital": "P36", "continent": "P30", "mother": "P25",
    "place of birth": "P19", "date of birth": "P569", "sex or gender": "P21",
    "inception": "P571", "time of discovery or invention": "P575",
    "discoverer or inventor": "P61", "head of government": "P6",
    "named after": "P138", "architect": "P84", "author": "P50",
}

entities = {}


def ent(eid, label, synsets=(), commons=None):
    entities[eid] = {"label": label, "synsets": list(synsets), "statements": []}
    if commons:
        entities[eid]["commons_name"] = commons


def st(subj, prop, obj):
    entities[subj]["statements"].append(
        {"property_id": P[prop], "property_label": prop, "object": obj})


def E(eid):
    return {"kind": "entity", "id": eid}


def num(v, unit=None):
    o = {"kind": "number", "value": v}
    if unit:
        o["unit"] = unit
    return o


def year(y):
    return {"kind": "date", "year": y, "precision": "year"}


def day(y, m, d):
    return {"kind": "date", "year": y, "month": m, "day": d, "precision": "day"}


def lit(s):
    return {"kind": "literal", "value": s}


# classes
for eid, label in [
    ("Q16970", "church"), ("Q11303", "skyscraper"), ("Q12518", "tower"),
    ("Q6017969", "lattice tower"), ("Q54050", "amphitheatre"),
    ("Q3947", "city hall"), ("Q82117", "city gate"), ("Q6256", "country"),
    ("Q515", "city"), ("Q5", "human"), ("Q34442", "road signal"),
    ("Q39546", "tool"), ("Q752870", "motor vehicle"), ("Q42889", "vehicle"),
    ("Q622852", "domesticated animal"), ("Q746549", "dish"), ("Q1364", "fruit"),
    ("Q34770", "language"), ("Q8142", "currency"), ("Q5107", "continent"),
    ("Q6581097", "male"), ("Q6581072", "female"), ("Q1047113", "structure"),
]:
    ent(eid, label)

# continents
for eid, label in [("Q46", "Europe"), ("Q48", "Asia"), ("Q49", "North America"),
                   ("Q18", "South America"), ("Q538", "Oceania")]:
    ent(eid, label)
    st(eid, "instance of", E("Q5107"))

# languages
for eid, label in [("Q9027", "Swedish"), ("Q9237", "Malay"), ("Q1860", "English"),
                   ("Q188", "German"), ("Q150", "French"), ("Q652", "Italian"),
                   ("Q1321", "Spanish")]:
    ent(eid, label)
    st(eid, "instance of", E("Q34770"))

# currencies
for eid, label in [("Q122922", "Swedish krona"), ("Q163712", "Malaysian ringgit"),
                   ("Q25224", "pound sterling"), ("Q4916", "euro"),
                   ("Q4917", "United States dollar"), ("Q199578", "Argentine peso"),
                   ("Q200158", "Papua New Guinean kina")]:
    ent(eid, label)
    st(eid, "instance of", E("Q8142"))

# countries: id, label, capital id, capital label, language, currency, continent, population
countries = [
    ("Q34", "Sweden", "Q1754", "Stockholm", "Q9027", "Q122922", "Q46", 10551707),
    ("Q833", "Malaysia", "Q1865", "Kuala Lumpur", "Q9237", "Q163712", "Q48", 33200000),
    ("Q145", "United Kingdom", "Q84", "London", "Q1860", "Q25224", "Q46", 67326569),
    ("Q183", "Germany", "Q64", "Berlin", "Q188", "Q4916", "Q46", 84358845),
    ("Q142", "France", "Q90", "Paris", "Q150", "Q4916", "Q46", 68042591),
    ("Q38", "Italy", "Q220", "Rome", "Q652", "Q4916", "Q46", 58850717),
    ("Q30", "United States of America", "Q61", "Washington, D.C.", "Q1860", "Q4917", "Q49", 334914895),
    ("Q414", "Argentina", "Q1486", "Buenos Aires", "Q1321", "Q199578", "Q18", 46044703),
    ("Q691", "Papua New Guinea", "Q36526", "Port Moresby", "Q1860", "Q200158", "Q538", 10329931),
]
for cid, clabel, capid, caplabel, lang, cur, cont, pop in countries:
    ent(cid, clabel)
    ent(capid, caplabel)
    st(cid, "instance of", E("Q6256"))
    st(cid, "country", E(cid))  # self-loop, as on the live graph
    st(cid, "capital", E(capid))
    st(cid, "official language", E(lang))
    st(cid, "currency", E(cur))
    st(cid, "continent", E(cont))
    st(cid, "population", num(pop))
    st(capid, "instance of", E("Q515"))
    st(capid, "country", E(cid))

# other cities
for eid, label, country in [("Q1040", "Karlsruhe", "Q183"), ("Q3133", "Mannheim", "Q183"),
                            ("Q42810", "Clermont-Ferrand", "Q142"), ("Q41262", "Nottingham", "Q145"),
                            ("Q44596", "San Miguel de Tucumán", "Q414"),
                            ("Q202955", "Paris 4e", "Q142"), ("Q1726", "Munich", "Q183")]:
    ent(eid, label)
    st(eid, "instance of", E("Q515"))
    st(eid, "country", E(country))

# people
people = [
    ("Q366346", "César Pelli", day(1926, 10, 12), "Q44596"),
    ("Q38111", "Karl Benz", day(1844, 11, 25), "Q1040"),
    ("Q57224", "Karl Drais", day(1785, 4, 29), "Q1040"),
    ("Q1290", "Blaise Pascal", day(1623, 6, 19), "Q42810"),
    ("Q6254530", "John Peake Knight", year(1828), "Q41262"),
    ("Q2295", "Stephen Sauvestre", day(1847, 12, 26), "Q202955"),
    ("Q312658", "Ragnar Östberg", day(1866, 7, 14), "Q1754"),
    ("Q76763", "Carl Gotthard Langhans", day(1732, 12, 15), "Q1040"),
    ("Q299225", "Augustus Pugin", day(1812, 3, 1), "Q84"),
    ("Q7500986", "William F. Lamb", day(1883, 11, 21), "Q61"),
    ("Q1000001", "Rudolf Diesel", day(1858, 3, 18), "Q90"),
]
for pid, label, dob, pob in people:
    ent(pid, label)
    st(pid, "instance of", E("Q5"))
    st(pid, "date of birth", dob)
    st(pid, "place of birth", E(pob))
    st(pid, "sex or gender", E("Q6581097"))

# landmarks (GLDv2 side): id, label, commons name, class, architect, height, width, country, inception
landmarks = [
    ("Q1758990", "Maria Magdalena kyrka", "Maria Magdalena kyrka, Stockholm", "Q16970", None, 58, None, "Q34", year(1634)),
    ("Q83063", "Petronas Towers", "Petronas Towers", "Q11303", "Q366346", 451.9, None, "Q833", year(1999)),
    ("Q9188", "Empire State Building", "Empire State Building", "Q11303", "Q7500986", 443.2, None, "Q30", day(1931, 5, 1)),
    ("Q243", "Eiffel Tower", "Eiffel Tower", "Q6017969", "Q2295", 330, 125, "Q142", day(1889, 3, 31)),
    ("Q10285", "Colosseum", "Colosseum", "Q54050", None, 48, 156, "Q38", year(80)),
    ("Q842858", "Stockholm City Hall", "Stockholm City Hall", "Q3947", "Q312658", 106, None, "Q34", year(1923)),
    ("Q82425", "Brandenburg Gate", "Brandenburger Tor", "Q82117", "Q76763", 26, 65.5, "Q183", year(1791)),
    ("Q41225", "Elizabeth Tower", "Elizabeth Tower", "Q12518", "Q299225", 96, 12, "Q145", year(1859)),
]
for eid, label, commons, cls, arch, h, w, country, inc in landmarks:
    ent(eid, label, commons=commons)
    st(eid, "instance of", E(cls))
    if arch:
        st(eid, "architect", E(arch))
    st(eid, "height", num(h, "metre"))
    if w is not None:
        st(eid, "width", num(w, "metre"))
    st(eid, "country", E(country))
    st(eid, "inception", inc)
st("Q1758990", "named after", lit("Mary Magdalene"))
st("Q41225", "named after", lit("Elizabeth II"))
st("Q243", "named after", lit("Gustave Eiffel"))
st("Q9188", "named after", lit("State of New York"))

# VG object classes: id, label, synset, class, inventor, invention year, origin, mass, life exp, energy
ent("Q8004", "traffic light", synsets=["06887235-n"])
st("Q8004", "subclass of", E("Q34442"))
st("Q8004", "discoverer or inventor", E("Q6254530"))
st("Q8004", "time of discovery or invention", year(1868))
st("Q8004", "country of origin", E("Q145"))

ent("Q1420", "car", synsets=["02958343-n"])
st("Q1420", "subclass of", E("Q752870"))
st("Q1420", "discoverer or inventor", E("Q38111"))
st("Q1420", "time of discovery or invention", year(1886))
st("Q1420", "country of origin", E("Q183"))
st("Q1420", "mass", num(1500, "kilogram"))

ent("Q11442", "bicycle", synsets=["02834778-n"])
st("Q11442", "subclass of", E("Q42889"))
st("Q11442", "discoverer or inventor", E("Q57224"))
st("Q11442", "time of discovery or invention", year(1817))
st("Q11442", "country of origin", E("Q183"))
st("Q11442", "mass", num(15, "kilogram"))

ent("Q5638", "bus", synsets=["02924116-n"])
st("Q5638", "subclass of", E("Q752870"))
st("Q5638", "discoverer or inventor", E("Q1290"))
st("Q5638", "time of discovery or invention", year(1662))
st("Q5638", "country of origin", E("Q142"))
st("Q5638", "mass", num(12000, "kilogram"))

ent("Q870", "truck", synsets=["04490091-n"])
st("Q870", "subclass of", E("Q752870"))
st("Q870", "discoverer or inventor", E("Q1000001"))
st("Q870", "time of discovery or invention", year(1896))
st("Q870", "country of origin", E("Q183"))
st("Q870", "mass", num(9000, "kilogram"))

ent("Q144", "dog", synsets=["02084071-n"])
st("Q144", "subclass of", E("Q622852"))
st("Q144", "life expectancy", num(12, "year"))
st("Q144", "mass", num(30, "kilogram"))

ent("Q146", "cat", synsets=["02121620-n"])
st("Q146", "subclass of", E("Q622852"))
st("Q146", "life expectancy", num(15, "year"))
st("Q146", "mass", num(4.5, "kilogram"))

ent("Q726", "horse", synsets=["02374451-n"])
st("Q726", "subclass of", E("Q622852"))
st("Q726", "life expectancy", num(28, "year"))
st("Q726", "mass", num(500, "kilogram"))

ent("Q177", "pizza", synsets=["07873807-n"])
st("Q177", "subclass of", E("Q746549"))
st("Q177", "country of origin", E("Q38"))
st("Q177", "energy per unit mass", num(266, "kilocalorie"))

ent("Q503", "banana", synsets=["07753592-n"])
st("Q503", "subclass of", E("Q1364"))
st("Q503", "country of origin", E("Q691"))
st("Q503", "energy per unit mass", num(89, "kilocalorie"))

ent("Q41127", "umbrella", synsets=["04507155-n"])
st("Q41127", "subclass of", E("Q39546"))
st("Q41127", "country of origin", E("Q142"))

# bookkeeping entities referenced by unit tests
ent("E1", "Test Tower", commons="Test Tower")
st("E1", "instance of", E("Q12518"))
st("E1", "height", num(100, "metre"))
st("E1", "country", E("Q34"))
ent("E7", "test object", synsets=["12345678-n"])
st("E7", "subclass of", E("Q1047113"))
st("E7", "width", num(2.25, "metre"))
ent("E9", "unclassified thing")
st("E9", "height", num(3, "metre"))

with open(os.path.join(OUT, "fixture_kg.json"), "w", encoding="utf-8") as f:
    json.dump({"entities": entities}, f, ensure_ascii=False, indent=1, sort_keys=True)
    f.write("\n")

wordnet = [
    ("traffic_light.n.01", "06887235-n"), ("car.n.01", "02958343-n"),
    ("bicycle.n.01", "02834778-n"), ("bus.n.01", "02924116-n"),
    ("truck.n.01", "04490091-n"), ("dog.n.01", "02084071-n"),
    ("cat.n.01", "02121620-n"), ("horse.n.01", "02374451-n"),
    ("pizza.n.01", "07873807-n"), ("banana.n.02", "07753592-n"),
    ("umbrella.n.01", "04507155-n"), ("testobject.n.01", "12345678-n"),
    ("sidewalk.n.01", "04215402-n"), ("tree.n.01", "13104059-n"),
    ("man.n.01", "10287213-n"),
]
with open(os.path.join(OUT, "wordnet_index.tsv"), "w") as f:
    for k, v in wordnet:
        f.write(f"{k}\t{v}\n")

# VG images. Each composition is instantiated twenty times so that every
# category splits 14/6 and several compositions can share one category.
compositions = [
    ["traffic_light.n.01", "car.n.01", "sidewalk.n.01"],
    ["dog.n.01", "bicycle.n.01", "tree.n.01"],
    ["bus.n.01", "traffic_light.n.01", "man.n.01"],
    ["cat.n.01", "umbrella.n.01"],
    ["horse.n.01", "truck.n.01"],
    ["pizza.n.01", "banana.n.02"],
]
relations_for = {
    "car.n.01": ("parked next to", "sidewalk"),
    "dog.n.01": ("sitting on", "bench"),
    "bus.n.01": ("stopped at", "traffic light"),
    "horse.n.01": ("standing in", "field"),
    "cat.n.01": ("sleeping under", "umbrella"),
}
objects, relations = [], []
n = 0
for comp in compositions:
    for rep in range(20):
        n += 1
        image_id = f"vg{n:04d}"
        for k, syn in enumerate(comp):
            oid = f"{image_id}_o{k + 1}"
            objects.append({"image_id": image_id, "object_id": oid, "synset_name": syn,
                            "bbox": [10 * k, 20 + rep, 50 + k, 40]})
            if syn in relations_for and rep % 2 == 0:
                pred, lab = relations_for[syn]
                relations.append({"image_id": image_id, "subject_object_id": oid,
                                  "predicate": pred, "object_label": lab})
with open(os.path.join(OUT, "vg_objects.jsonl"), "w") as f:
    for o in objects:
        f.write(json.dumps(o, ensure_ascii=False) + "\n")
with open(os.path.join(OUT, "vg_relations.jsonl"), "w") as f:
    for r in relations:
        f.write(json.dumps(r, ensure_ascii=False) + "\n")

base = "https://commons.wikimedia.org/wiki/Category:"
gld = []
copies = {"Maria_Magdalena_kyrka,_Stockholm": 10, "Petronas_Towers": 10,
          "Empire_State_Building": 10, "Eiffel_Tower": 10, "Colosseum": 10,
          "Stockholm_City_Hall": 10, "Brandenburger_Tor": 10, "Elizabeth_Tower": 10,
          "Sagrada_Fam%C3%ADlia": 1}
g = 0
for name, count in copies.items():
    for _ in range(count):
        g += 1
        gld.append((f"gld{g:04d}", base + name))
with open(os.path.join(OUT, "gld_images.csv"), "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["image_id", "wikimedia_url"])
    w.writerows(gld)
