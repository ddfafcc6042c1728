//! Built-in store brands and the mini product ontology used by the corpus
//! generator. Everything here is fictional but shaped like French grocery
//! data so the abbreviation table and text criteria get realistic input.

use crate::semantics::{Concept, Ontology, OntologyCategory};
use crate::sign::{LogoAspect, StoreDb, StoreRecord};

/// Ten stores with distinct names, phones, slogans and logo aspects.
pub fn default_stores() -> StoreDb {
    let rows: &[(&str, &str, &str, &str, LogoAspect)] = &[
        ("nordmarche", "NORDMARCHE", "0450096520", "LA QUALITE CHAQUE JOUR", LogoAspect::Long),
        ("epicerie-royale", "EPICERIE ROYALE", "0472615533", "LE GOUT DU TERROIR", LogoAspect::Short),
        ("super-lavande", "SUPER LAVANDE", "0491778210", "TOUJOURS MOINS CHER", LogoAspect::Long),
        ("marche-tournesol", "MARCHE TOURNESOL", "0561442987", "VOTRE PANIER MALIN", LogoAspect::Short),
        ("petit-panier", "PETIT PANIER", "0238551644", "PRES DE CHEZ VOUS", LogoAspect::Long),
        ("grand-cedre", "GRAND CEDRE", "0388203751", "DES PRIX BAS GARANTIS", LogoAspect::Short),
        ("etoile-market", "ETOILE MARKET", "0298635472", "FRAICHEUR SERVIE", LogoAspect::Long),
        ("rive-fraiche", "RIVE FRAICHE", "0549812036", "BIEN MANGER SIMPLEMENT", LogoAspect::Short),
        ("comptoir-vert", "COMPTOIR VERT", "0383924165", "NATUREL ET LOCAL", LogoAspect::Long),
        ("halle-azur", "HALLE AZUR", "0442387590", "LE CHOIX DES GOURMANDS", LogoAspect::Short),
    ];
    let stores = rows
        .iter()
        .map(|&(id, name, phone, slogan, aspect)| StoreRecord {
            store_id: id.to_string(),
            name: name.to_string(),
            name_variants: vec![name.to_string()],
            phone_numbers: vec![phone.to_string()],
            terminology: vec![slogan.to_string()],
            logo_aspect: aspect,
            // Receipts print the price column at about 72% of the width.
            layout_priors: vec![0.72],
        })
        .collect();
    StoreDb::new(stores).expect("built-in store db is valid")
}

/// One curated product: concept definition plus the abbreviated spelling the
/// receipt renderer prints for it. The print label must resolve back to its
/// own concept through the built-in abbreviation table.
pub struct CatalogProduct {
    pub concept_id: &'static str,
    pub category: &'static str,
    pub label: &'static str,
    pub term: &'static str,
    pub print: &'static str,
}

pub const CURATED: &[CatalogProduct] = &[
    p("yaourt-nature", "dairy", "YAOURT NATURE", "YAOURT NATURE", "YAOURT NAT"),
    p("yaourt-fruits", "dairy", "YAOURT AUX FRUITS", "YAOURT FRUITS", "YRT FRTS"),
    p("lait-demi", "dairy", "LAIT DEMI ECREME", "LAIT DEMI ECREME", "LAIT DEMI"),
    p("beurre-doux", "dairy", "BEURRE DOUX", "BEURRE DOUX", "BEUR DOUX"),
    p("creme-fraiche", "dairy", "CREME FRAICHE", "CREME FRAICHE", "CRM FRAIS"),
    p("camembert", "dairy", "CAMEMBERT", "CAMEMBERT", "CAMEMB"),
    p("emmental-rape", "dairy", "EMMENTAL RAPE", "EMMENTAL RAPE", "EMMENT RAPE"),
    p("jambon-blanc", "meat", "JAMBON BLANC", "JAMBON BLANC", "JAMB BLANC"),
    p("saucisson-sec", "meat", "SAUCISSON SEC", "SAUCISSON SEC", "SAUC SEC"),
    p("poulet-roti", "meat", "POULET ROTI", "POULET ROTI", "POUL ROTI"),
    p("viande-hachee", "meat", "VIANDE HACHEE", "VIANDE HACHEE", "VDE HACHEE"),
    p("saumon-fume", "fish", "SAUMON FUME", "SAUMON FUME", "SAUM FUME"),
    p("crevettes-roses", "fish", "CREVETTES ROSES", "CREVETTES ROSES", "CREV ROSES"),
    p("baguette-tradition", "bakery", "BAGUETTE TRADITION", "BAGUETTE TRADITION", "BAG TRAD"),
    p("croissant-beurre", "bakery", "CROISSANT PUR BEURRE", "CROISSANT PUR BEURRE", "CROIS BEUR"),
    p("farine-ble", "grocery", "FARINE DE BLE", "FARINE BLE", "FAR BLE"),
    p("sucre-poudre", "grocery", "SUCRE EN POUDRE", "SUCRE POUDRE", "SUC POUDRE"),
    p("huile-olive", "grocery", "HUILE D'OLIVE", "HUILE OLIVE", "HLE OLV"),
    p("huile-tournesol", "grocery", "HUILE DE TOURNESOL", "HUILE TOURNESOL", "HLE TOURN"),
    p("spaghetti", "grocery", "SPAGHETTI", "SPAGHETTI", "SPAG"),
    p("riz-long", "grocery", "RIZ LONG GRAIN", "RIZ LONG GRAIN", "RIZ LONG"),
    p("cafe-moulu", "grocery", "CAFE MOULU", "CAFE MOULU", "CAF MOULU"),
    p("the-vert", "grocery", "THE VERT", "THE VERT", "THE VERT"),
    p("confiture-fraise", "grocery", "CONFITURE DE FRAISE", "CONFITURE FRAISE", "CONF FRAISE"),
    p("cereales-chocolat", "grocery", "CEREALES AU CHOCOLAT", "CEREALES CHOCOLAT", "CEREAL CHOC"),
    p("jus-orange", "drinks", "JUS D'ORANGE", "JUS ORANGE", "JUS ORG"),
    p("eau-gazeuse", "drinks", "EAU GAZEUSE", "EAU GAZEUSE", "EAU GAZ"),
    p("eau-minerale", "drinks", "EAU MINERALE", "EAU MINERALE", "EAU MIN"),
    p("compote-pomme", "produce", "COMPOTE DE POMME", "COMPOTE POMME", "CPOTE PML"),
    p("pomme-de-terre", "produce", "POMME DE TERRE", "POMME DE TERRE", "PDT"),
    p("salade-verte", "produce", "SALADE VERTE", "SALADE VERTE", "SALADE VERTE"),
    p("tomates-grappe", "produce", "TOMATES GRAPPE", "TOMATES GRAPPE", "TOMATES GRAPPE"),
    p("pizza-fromage", "frozen", "PIZZA AU FROMAGE", "PIZZA FROMAGE", "PIZZ FROM"),
    p("glace-vanille", "frozen", "GLACE VANILLE", "GLACE VANILLE", "GLC VANILLE"),
    p("quiche-lorraine", "frozen", "QUICHE LORRAINE", "QUICHE LORRAINE", "QUICH LORRAINE"),
    p("lessive-liquide", "household", "LESSIVE LIQUIDE", "LESSIVE LIQUIDE", "LESS LIQUIDE"),
    p("nettoyant-vaisselle", "household", "NETTOYANT VAISSELLE", "NETTOYANT VAISSELLE", "NETT VAISS"),
    p("papier-hygienique", "hygiene", "PAPIER HYGIENIQUE", "PAPIER HYGIENIQUE", "PAP HYG"),
    p("dentifrice-menthe", "hygiene", "DENTIFRICE MENTHE", "DENTIFRICE MENTHE", "DENT MENTHE"),
    p("shampooing-doux", "hygiene", "SHAMPOOING DOUX", "SHAMPOOING DOUX", "SHAMP DOUX"),
    p("savon-mains", "hygiene", "SAVON POUR LES MAINS", "SAVON MAINS", "SAV MAINS"),
    p("mouchoirs", "hygiene", "MOUCHOIRS", "MOUCHOIRS", "MOUCH"),
];

const fn p(
    concept_id: &'static str,
    category: &'static str,
    label: &'static str,
    term: &'static str,
    print: &'static str,
) -> CatalogProduct {
    CatalogProduct { concept_id, category, label, term, print }
}

const CATEGORIES: &[&str] = &[
    "dairy", "meat", "fish", "bakery", "grocery", "drinks", "produce", "frozen", "household",
    "hygiene",
];

// Nonsense word pools for padding the ontology past the curated set; no
// word resembles a curated token, so generated terms never collide.
const GEN_FIRST: &[&str] = &[
    "ZORVAL", "KREPIN", "DULMOT", "FIXARO", "GOMBEL", "RASQUE", "VINTOU", "PLOMIR", "QUEZAT",
    "BRUMAL", "SELDOR", "TIGNOL", "WOPRAK", "XANDRI", "LUFTEN", "MORVIC", "NEPTAL", "OSKIRD",
    "PRAVOU", "KELMID",
];
const GEN_SECOND: &[&str] = &[
    "AZURIN", "BOREAL", "CIVRAN", "DOLMEX", "ELTIRO", "FUMARD", "GRELOT", "HIVOLT", "JUMKAD",
    "KROVEL",
];

/// The `print` spelling the renderer uses for a concept, keyed by id.
pub fn print_label(concept_id: &str) -> Option<&'static str> {
    CURATED.iter().find(|c| c.concept_id == concept_id).map(|c| c.print)
}

/// Mini ontology with `n` concepts: the curated products first, padded with
/// generated two-word concepts. Supports up to 242 concepts.
pub fn default_ontology(n: usize) -> Ontology {
    assert!(n >= 1 && n <= CURATED.len() + GEN_FIRST.len() * GEN_SECOND.len());
    let categories = CATEGORIES
        .iter()
        .map(|&id| OntologyCategory { id: id.to_string(), label: id.to_uppercase() })
        .collect();
    let mut concepts = Vec::with_capacity(n);
    for c in CURATED.iter().take(n) {
        concepts.push(Concept {
            id: c.concept_id.to_string(),
            category: c.category.to_string(),
            label: c.label.to_string(),
            terms: vec![c.term.to_string()],
        });
    }
    let mut k = 0usize;
    while concepts.len() < n {
        let name = format!("{} {}", GEN_FIRST[k / GEN_SECOND.len()], GEN_SECOND[k % GEN_SECOND.len()]);
        concepts.push(Concept {
            id: format!("gen-{k:03}"),
            category: CATEGORIES[k % CATEGORIES.len()].to_string(),
            label: name.clone(),
            terms: vec![name],
        });
        k += 1;
    }
    Ontology::new(categories, concepts).expect("built-in ontology is valid")
}

/// Receipt spelling for any concept in [`default_ontology`]: the curated
/// print label, or the term itself for generated concepts.
pub fn concept_print_label(ontology: &Ontology, index: usize) -> String {
    let c = &ontology.concepts[index];
    print_label(&c.id).map(str::to_string).unwrap_or_else(|| c.terms[0].clone())
}
