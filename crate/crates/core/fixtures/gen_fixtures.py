#!/usr/bin/env python3
"""Regenerates the checked-in reference bundles and synthetic corpus.

Run from this directory: python3 gen_fixtures.py
"""
import json
import os
import string

HERE = os.path.dirname(os.path.abspath(__file__))

SPECIALS = ["[UNK]", "[MASK]", "[SEP]", "[CLS]"]

COMMON = """hello hi my name is i need help with order account the please thanks you
can what your number email phone address zip code username id it to update status
shipping ok sure thank delivery was late cancel subscription billing charge on card
street city of for and me check send at sent confirm here this yes no moment one let
look found done anything else great day have good lane drive road court in will
arrive soon a an be been that there about how are am not when new item package
tracking refund charged replace card question working again sorry hear right away
welcome set all now if also just use still get got open close ready way""".split()

FIRST = ["alice", "carlos", "dana", "elena", "felix", "grace", "henry", "irene", "jonas", "kara"]
LAST = ["becker", "reyes", "foster", "marsh", "ortega", "lin", "walsh", "koval", "pirelli", "dobbs"]
USERNAMES = ["avbeck", "creyes9", "dfost22", "emarsh", "fortega7", "glin88", "hwalsh", "ikoval", "jpirelli", "kdobbs1"]
STREETS = ["maplewood", "birchwood", "cedarcrest", "oakridge", "pinehurst",
           "elmwood", "willowbrook", "stonegate", "brookfield", "lakeshore"]
EXTRA_SENSITIVE = ["mailbox", "com"]

REPL_FIRST = ["margot", "pablo", "tessa", "nora", "oscar", "paula", "victor", "ruby", "simon", "wendy"]
REPL_LAST = ["sutton", "molina", "hartley", "quinn", "delgado", "chen", "monroe", "novak", "castell", "archer"]
REPL_USER = ["bmart44", "cnova2", "dquinn8", "ehart55", "fvega3", "gchen71", "hmonro", "inovak2", "jcast12", "karcher9"]
REPL_STREET = ["ashgrove", "fernhill", "rosedale", "hollyvale", "ivybrook",
               "clearmont", "sunnymead", "wintercrest", "glenhaven", "driftwood"]
REPL_EXTRA = ["webpost", "net"]

PUNCT = [".", ",", "?", "!", "-", "@", "(", ")", "/", "+", ":", "'"]

PHONES = ["555-0142", "555-0178", "555-0113", "555-0167", "555-0190",
          "555-0124", "555-0135", "555-0186", "555-0151", "555-0109"]
ACCOUNTS = ["20391688", "31472905", "45820137", "56914302", "60238471",
            "71359024", "82460913", "93571048", "14682950", "25793061"]
ORDERS = ["77341", "81205", "69012", "54873", "43260", "32158", "21947", "90836", "87624", "76513"]
ZIPS = ["90210", "30341", "60614", "73301", "94109", "10013", "85004", "98121", "33109", "48226"]


def build_sensitive_pairs():
    pairs = []  # (sensitive token, replacement token)
    for f, rf in zip(FIRST, REPL_FIRST):
        pairs.append((f, rf))
    for l, rl in zip(LAST, REPL_LAST):
        pairs.append((l, rl))
    for u, ru in zip(USERNAMES, REPL_USER):
        pairs.append((u, ru))
    for s, rs in zip(STREETS, REPL_STREET):
        pairs.append((s, rs))
    for e, re_ in zip(EXTRA_SENSITIVE, REPL_EXTRA):
        pairs.append((e, re_))
    return pairs


def planted_prob(i):
    return [1e-4, 1e-5, 1e-6, 5e-5, 2e-5, 5e-6][i % 6]


def write_corpus_bundle():
    pairs = build_sensitive_pairs()
    sensitive = [p[0] for p in pairs]
    replacements = [p[1] for p in pairs]

    raw = list(SPECIALS)
    raw += sorted(set(COMMON))
    raw += sensitive
    raw += replacements
    raw += PUNCT
    raw += list(string.ascii_lowercase)
    raw += ["##" + c for c in string.ascii_lowercase]
    raw += list(string.digits)
    raw += ["##" + d for d in string.digits]
    raw += ["##-", "##.", "##/", "##(", "##)", "##+"]
    vocab = list(dict.fromkeys(raw))

    dim = len(pairs) + 1
    axis = {}
    for i, (s, r) in enumerate(pairs):
        axis[s] = i
        axis[r] = i

    table = ["# synthetic corpus probability table"]
    for i, s in enumerate(sensitive):
        table.append(f"_\t{s}\t{planted_prob(i):g}")
    for r in replacements:
        table.append(f"_\t{r}\t0.012")

    emb = ["# paired-axis embeddings: sensitive token and its nearest substitute share an axis"]
    for tok in vocab:
        a = axis.get(tok, dim - 1)
        vec = ["0"] * dim
        vec[a] = "1"
        emb.append(tok + "\t" + " ".join(vec))

    bundle = os.path.join(HERE, "bundle_fixture")
    os.makedirs(bundle, exist_ok=True)
    with open(os.path.join(bundle, "vocab.txt"), "w") as f:
        f.write("\n".join(vocab) + "\n")
    with open(os.path.join(bundle, "table.tsv"), "w") as f:
        f.write("\n".join(table) + "\n")
    with open(os.path.join(bundle, "embeddings.tsv"), "w") as f:
        f.write("\n".join(emb) + "\n")
    with open(os.path.join(bundle, "manifest.json"), "w") as f:
        json.dump({
            "backend": "reference",
            "variant": "fixture-corpus",
            "vocab_file": "vocab.txt",
            "continuation_marker": "##",
            "unk_token": "[UNK]",
            "mask_token": "[MASK]",
            "sep_token": "[SEP]",
            "max_context_len": 256,
            "embedding_dim": dim,
            "table_file": "table.tsv",
            "embeddings_file": "embeddings.tsv",
        }, f, indent=2)
        f.write("\n")
    return set(vocab)


def conversation(i, vocab):
    first = FIRST[i % 10].title()
    last = LAST[i % 10].title()
    user = USERNAMES[i % 10]
    email = f"{user}@mailbox.com"
    phone = PHONES[i % 10]
    account = ACCOUNTS[i % 10]
    order = ORDERS[i % 10]
    street = f"{700 + 7 * i} {STREETS[i % 10]} lane"
    zipc = ZIPS[i % 10]

    scripts = [
        [
            ("customer", "Hello , I need help with my order ."),
            ("agent", "Sure , can I have your name please ?"),
            ("customer", f"My name is {first} {last} and my email is {email} ."),
            ("agent", f"Thanks {first} , what is the order number ?"),
            ("customer", f"The order number is {order} and my zip code is {zipc} ."),
            ("agent", f"Done , the order {order} will arrive soon ."),
        ],
        [
            ("customer", "Hi , I need to update my shipping address ."),
            ("agent", "Ok , what is your username and account id ?"),
            ("customer", f"My username is {user} and my account id is {account} ."),
            ("agent", "Thanks , what is the new address ?"),
            ("customer", f"The new address is {street} in the city ."),
            ("agent", "Done , the address is set . Anything else ?"),
            ("customer", "No , thank you . Have a good day ."),
        ],
        [
            ("customer", "Hello , my delivery was late and I need a refund ."),
            ("agent", "Sorry to hear that . Can I have your name and phone number ?"),
            ("customer", f"My name is {first} {last} and my phone number is {phone} ."),
            ("agent", f"Thanks {first} , I found the account . The refund is on the way ."),
            ("customer", "Great , thank you for the help ."),
        ],
        [
            ("customer", "Hi , I need to cancel my subscription ."),
            ("agent", "Ok , can you confirm your email and zip code ?"),
            ("customer", f"Sure , the email is {email} and the zip code is {zipc} ."),
            ("agent", "Thanks , the subscription is done . Anything else ?"),
            ("customer", f"Yes , please check order {order} for me ."),
            ("agent", f"Order {order} will arrive soon ."),
        ],
    ]
    turns = scripts[i % 4]

    metadata = {}
    text_all = " ".join(t for _, t in turns)
    candidates = {
        "customer name": [f"{first} {last}"],
        "username": [user],
        "email": [email],
        "phone number": [phone],
        "account id": [account],
        "order id": [order],
        "street address": [street],
        "zip code": [zipc],
    }
    for cat, values in candidates.items():
        if all(v in text_all for v in values):
            metadata[cat] = values

    # vocabulary closure check: every alphabetic word must be in vocab
    for _, text in turns:
        for chunk in text.lower().split():
            for ch in PUNCT:
                chunk = chunk.replace(ch, " ")
            for word in chunk.split():
                if word.isdigit():
                    continue
                assert word in vocab, f"word {word!r} missing from vocab (conv {i})"

    return {
        "id": f"conv-{i:02d}",
        "turns": [{"speaker": s, "text": t} for s, t in turns],
        "metadata": metadata,
    }


def write_corpus(vocab):
    corpus = {"conversations": [conversation(i, vocab) for i in range(20)]}
    with open(os.path.join(HERE, "corpus.json"), "w") as f:
        json.dump(corpus, f, indent=2)
        f.write("\n")


def write_worked_example_bundle():
    vocab = SPECIALS + ["my", "name", "is", "john", "smith", "david", "williams",
                        "the", "a", "to", "and", "order", "."]
    table = [
        "# introduction worked example",
        "_\tmy\t0.03",
        "_\tname\t0.07",
        "_\tis\t0.06",
        "_\tjohn\t0.004",
        "_\tsmith\t0.001",
        "_\tdavid\t0.3",
        "_\twilliams\t0.25",
    ]
    emb_axis = {"john": 0, "david": 0, "smith": 1, "williams": 1}
    emb = []
    for tok in vocab:
        a = emb_axis.get(tok, 2)
        vec = ["0", "0", "0"]
        vec[a] = "1"
        emb.append(tok + "\t" + " ".join(vec))

    bundle = os.path.join(HERE, "bundle_worked_example")
    os.makedirs(bundle, exist_ok=True)
    with open(os.path.join(bundle, "vocab.txt"), "w") as f:
        f.write("\n".join(vocab) + "\n")
    with open(os.path.join(bundle, "table.tsv"), "w") as f:
        f.write("\n".join(table) + "\n")
    with open(os.path.join(bundle, "embeddings.tsv"), "w") as f:
        f.write("\n".join(emb) + "\n")
    with open(os.path.join(bundle, "manifest.json"), "w") as f:
        json.dump({
            "backend": "reference",
            "variant": "worked-example",
            "vocab_file": "vocab.txt",
            "continuation_marker": "##",
            "unk_token": "[UNK]",
            "mask_token": "[MASK]",
            "sep_token": "[SEP]",
            "max_context_len": 128,
            "embedding_dim": 3,
            "table_file": "table.tsv",
            "embeddings_file": "embeddings.tsv",
        }, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    vocab = write_corpus_bundle()
    write_corpus(vocab)
    write_worked_example_bundle()
    print("fixtures written")
