from medchain.lib.provenance.audit import access_history, consent_history, dispensations, lineage, compliance_report
