# Ce fichier permet de rendre le répertoire 'utils' importable
# Les modules de calcul sont importés explicitement (utils.workload, utils.hog, ...)
